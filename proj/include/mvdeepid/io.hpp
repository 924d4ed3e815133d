#pragma once

// Persistence: binary PPM images, the dataset manifest, run reports (JSON
// plus curve CSV) and the comparison table CSV.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvdeepid/stats.hpp"
#include "mvdeepid/synth.hpp"
#include "mvdeepid/train.hpp"

namespace mvdeepid {

namespace fs = std::filesystem;

// --- PPM (P6, maxval 255) --------------------------------------------------

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw std::invalid_argument("write_ppm: expected (H, W, 3) image, got " +
                                to_string(image.shape()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::string bytes(image.size(), '\0');
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = static_cast<char>(quantize(image[i]));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline Tensor read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path.string() + "'");
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P6") throw std::runtime_error("'" + path.string() + "' is not a P6 PPM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw std::runtime_error("'" + path.string() + "' has a malformed PPM header");
  }
  if (maxval != 255 || w == 0 || h == 0)
    throw std::runtime_error("'" + path.string() + "': unsupported PPM geometry");
  std::string bytes(w * h * 3, '\0');
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::runtime_error("'" + path.string() + "': truncated pixel data");
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
  return img;
}

// --- dataset directory -------------------------------------------------------

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kManifestHeader = "identity,view,instance,split,path";

inline std::string image_filename(const ImageRecord& r) {
  std::ostringstream os;
  os << "images/" << std::setw(4) << std::setfill('0') << r.identity << '_'
     << view_code(r.view) << '_' << r.instance << ".ppm";
  return os.str();
}

/// Writes `dir/manifest.csv` and one PPM per image under `dir/images/`.
inline void write_dataset(const fs::path& dir, const MultiViewDataset& ds) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create '" + (dir / "images").string() + "': " + ec.message());
  std::ofstream m(dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!m) throw std::runtime_error("cannot write '" + (dir / kManifestName).string() + "'");
  m << kManifestHeader << '\n';
  for (const ImageRecord& r : ds.images) {
    const std::string rel = image_filename(r);
    write_ppm(dir / rel, r.image);
    m << r.identity << ',' << view_code(r.view) << ',' << r.instance << ','
      << split_name(r.split) << ',' << rel << '\n';
  }
  if (!m) throw std::runtime_error("failed writing manifest in '" + dir.string() + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

/// Loads a dataset directory. Malformed manifest rows are reported by line
/// number.
inline MultiViewDataset read_dataset(const fs::path& dir) {
  std::ifstream m(dir / kManifestName);
  if (!m) throw std::runtime_error("cannot read '" + (dir / kManifestName).string() + "'");
  std::string line;
  if (!std::getline(m, line) || line != kManifestHeader)
    throw std::runtime_error("manifest line 1: expected header '" +
                             std::string(kManifestHeader) + "'");
  MultiViewDataset ds;
  std::size_t lineNo = 1;
  std::size_t maxIdentity = 0;
  while (std::getline(m, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    ImageRecord r;
    try {
      if (cells.size() != 5) throw std::invalid_argument("expected 5 fields");
      std::size_t used = 0;
      r.identity = std::stoul(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("bad identity");
      r.view = parse_view(cells[1]);
      r.instance = std::stoul(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("bad instance");
      r.split = parse_split(cells[3]);
      r.image = read_ppm(dir / cells[4]);
      if (r.image.shape() != image_shape())
        throw std::invalid_argument("image shape " + to_string(r.image.shape()));
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineNo) + " ('" + line +
                               "'): " + e.what());
    }
    maxIdentity = std::max(maxIdentity, r.identity);
    ds.augmented = ds.augmented || (r.instance >= 2 && r.view != ViewLabel::Center);
    ds.images.push_back(std::move(r));
  }
  if (ds.images.empty()) throw std::runtime_error("manifest has no rows");
  ds.numIdentities = maxIdentity + 1;
  std::stable_sort(ds.images.begin(), ds.images.end(), [](const auto& a, const auto& b) {
    return std::tie(a.identity, a.view, a.instance) < std::tie(b.identity, b.view, b.instance);
  });
  return ds;
}

// --- reports -----------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json curve_json(const std::vector<EpochRecord>& curve) {
  auto a = nlohmann::ordered_json::array();
  for (const EpochRecord& e : curve)
    a.push_back({{"epoch", e.epoch},
                 {"train_error", e.trainError},
                 {"valid_error", e.validError},
                 {"test_error", e.testError},
                 {"train_loss", e.meanTrainLoss}});
  return a;
}

inline std::vector<EpochRecord> curve_from_json(const nlohmann::json& a) {
  std::vector<EpochRecord> c;
  for (const auto& e : a)
    c.push_back({e.at("epoch").get<std::size_t>(), e.at("train_error").get<double>(),
                 e.at("valid_error").get<double>(), e.at("test_error").get<double>(),
                 e.at("train_loss").get<double>()});
  return c;
}

}  // namespace detail

/// Report as JSON. Wall-clock time is deliberately excluded so reruns are
/// byte-identical; it is written separately by the CLI.
inline std::string report_to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  const TrainConfig& c = r.config;
  j["config"] = {{"model", kind_name(c.kind)},
                 {"views", views_string(c.viewOrder)},
                 {"learning_rate", c.learningRate},
                 {"epochs", c.epochs},
                 {"minibatch_size", c.minibatchSize},
                 {"seed", c.seed},
                 {"freeze_conv", c.freezeConv},
                 {"num_classes", c.numClasses},
                 {"filters", c.filters},
                 {"hidden", kHiddenUnits}};
  j["aggregation_dim"] = r.aggregationDim;
  j["diagnostic"] = r.diagnostic;
  j["final_accuracy"] = {{"train", r.trainAccuracy},
                         {"valid", r.validAccuracy},
                         {"test", r.testAccuracy}};
  j["curve"] = detail::curve_json(r.curve);
  j["pretrain_curve"] = detail::curve_json(r.pretrainCurve);
  j["checkpoint"] = r.checkpointPath;
  return j.dump(2) + "\n";
}

inline RunReport report_from_json(const std::string& text) {
  RunReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& c = j.at("config");
    r.config.kind = parse_kind(c.at("model").get<std::string>());
    r.config.viewOrder.clear();
    for (char ch : c.at("views").get<std::string>())
      r.config.viewOrder.push_back(parse_view(std::string(1, ch)));
    r.config.learningRate = c.at("learning_rate").get<double>();
    r.config.epochs = c.at("epochs").get<std::size_t>();
    r.config.minibatchSize = c.at("minibatch_size").get<std::size_t>();
    r.config.seed = c.at("seed").get<std::uint64_t>();
    r.config.freezeConv = c.at("freeze_conv").get<bool>();
    r.config.numClasses = c.at("num_classes").get<std::size_t>();
    r.config.filters = c.at("filters").get<FilterCounts>();
    r.aggregationDim = j.at("aggregation_dim").get<std::size_t>();
    r.diagnostic = j.at("diagnostic").get<bool>();
    r.trainAccuracy = j.at("final_accuracy").at("train").get<double>();
    r.validAccuracy = j.at("final_accuracy").at("valid").get<double>();
    r.testAccuracy = j.at("final_accuracy").at("test").get<double>();
    r.curve = detail::curve_from_json(j.at("curve"));
    r.pretrainCurve = detail::curve_from_json(j.at("pretrain_curve"));
    r.checkpointPath = j.at("checkpoint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
  return r;
}

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// epoch,train_err,valid_err,test_err,train_loss
inline std::string curve_csv(const RunReport& r) {
  std::ostringstream os;
  os << "epoch,train_err,valid_err,test_err,train_loss\n";
  for (const EpochRecord& e : r.curve)
    os << e.epoch << ',' << format_double(e.trainError) << ',' << format_double(e.validError)
       << ',' << format_double(e.testError) << ',' << format_double(e.meanTrainLoss) << '\n';
  return os.str();
}

/// Two blocks sharing the columns block,method,train,valid,test: final
/// accuracies per model, then t-values per model pair.
inline std::string comparison_csv(const ComparisonTable& t) {
  std::ostringstream os;
  os << "block,method,train,valid,test\n";
  for (const AccuracyRow& a : t.accuracy)
    os << "accuracy," << a.method << ',' << format_double(a.train) << ','
       << format_double(a.valid) << ',' << format_double(a.test) << '\n';
  for (const TTestRow& r : t.tests)
    os << "t_value," << r.comparison << ',' << format_double(r.train.t) << ','
       << format_double(r.valid.t) << ',' << format_double(r.test.t) << '\n';
  return os.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace mvdeepid
