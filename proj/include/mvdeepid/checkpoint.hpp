#pragma once

// Checkpoint file layout:
//
//   [u64 little-endian: header byte length][UTF-8 JSON header][payload]
//
// The payload is every parameter tensor as raw little-endian IEEE-754
// doubles, in the order the header lists them; header offsets are byte
// offsets from the start of the payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvdeepid/model.hpp"

namespace mvdeepid {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "mvdeepid-checkpoint";

struct Checkpoint {
  Model model;
  std::vector<std::uint64_t> seedChain;  // seeds that produced the model
};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  m.validate();
  nlohmann::ordered_json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["kind"] = kind_name(m.kind);
  header["view_order"] = views_string(m.viewOrder);
  header["num_classes"] = m.numClasses;
  header["hidden"] = m.hidden;
  header["filters"] = m.filters;
  header["freeze_conv"] = m.freezeConv;
  header["seed_chain"] = ckpt.seedChain;
  auto tensors = nlohmann::ordered_json::array();
  std::string payload;
  for_each_tensor(m.params, [&](const std::string& name, const Tensor& t, bool) {
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", payload.size()},
                       {"count", t.size()}});
    for (double v : t.data()) detail::put_u64_le(payload, std::bit_cast<std::uint64_t>(v));
  });
  header["tensors"] = std::move(tensors);
  const std::string h = header.dump();
  std::string out;
  detail::put_u64_le(out, h.size());
  out += h;
  out += payload;
  return out;
}

/// Rebuilds a model, rejecting any tensor set that does not match the
/// shapes implied by the declared kind and geometry.
inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  auto fail = [](const std::string& why) -> void {
    throw std::runtime_error("checkpoint: " + why);
  };
  if (bytes.size() < 8) fail("truncated file");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t hlen = detail::get_u64_le(raw);
  if (hlen > bytes.size() - 8) fail("header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }
  const std::size_t payloadStart = 8 + hlen;
  const std::size_t payloadSize = bytes.size() - payloadStart;

  Checkpoint c;
  try {
    if (header.at("format") != kCheckpointFormat) fail("not a checkpoint file");
    if (header.at("version").get<int>() != kCheckpointVersion)
      fail("unsupported version " + header.at("version").dump());
    std::vector<ViewLabel> views;
    for (char ch : header.at("view_order").get<std::string>())
      views.push_back(parse_view(std::string(1, ch)));
    const auto filters = header.at("filters").get<FilterCounts>();
    c.model = zero_model(parse_kind(header.at("kind").get<std::string>()), views,
                         header.at("num_classes").get<std::size_t>(), filters,
                         header.at("hidden").get<std::size_t>());
    c.model.freezeConv = header.at("freeze_conv").get<bool>();
    c.seedChain = header.at("seed_chain").get<std::vector<std::uint64_t>>();

    const auto& entries = header.at("tensors");
    std::size_t i = 0;
    for_each_tensor(c.model.params, [&](const std::string& name, Tensor& t, bool) {
      if (i >= entries.size()) fail("missing tensor '" + name + "'");
      const auto& e = entries[i++];
      if (e.at("name").get<std::string>() != name)
        fail("expected tensor '" + name + "', found '" + e.at("name").get<std::string>() + "'");
      if (e.at("shape").get<Shape>() != t.shape())
        fail("tensor '" + name + "' has shape " + to_string(e.at("shape").get<Shape>()) +
             ", model kind requires " + to_string(t.shape()));
      const auto offset = e.at("offset").get<std::size_t>();
      if (e.at("count").get<std::size_t>() != t.size() || offset > payloadSize ||
          t.size() * 8 > payloadSize - offset)
        fail("tensor '" + name + "' payload out of range");
      const unsigned char* p = raw + payloadStart + offset;
      for (std::size_t j = 0; j < t.size(); ++j)
        t[j] = std::bit_cast<double>(detail::get_u64_le(p + 8 * j));
    });
    if (i != entries.size()) fail("unexpected extra tensors for this model kind");
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mvdeepid
