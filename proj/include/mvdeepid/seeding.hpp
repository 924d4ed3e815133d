#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mvdeepid {

/// Mixes a base seed with a key path into an independent 64-bit seed, so a
/// stream's randomness depends only on its own key and never on the order
/// in which streams are created.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * keys.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(base);
  for (std::uint64_t k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline std::mt19937_64 make_rng(std::uint64_t base,
                                std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(derive_seed(base, keys));
}

}  // namespace mvdeepid
