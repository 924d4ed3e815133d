#pragma once

// Training protocol: minibatch SGD on the NLL with per-epoch error curves
// over the train/valid/test splits.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvdeepid/model.hpp"
#include "mvdeepid/seeding.hpp"
#include "mvdeepid/synth.hpp"
#include "mvdeepid/views.hpp"

namespace mvdeepid {

struct TrainConfig {
  double learningRate = kDefaultLearningRate;
  std::size_t epochs = 20;
  std::size_t minibatchSize = 16;
  std::uint64_t seed = 1;
  bool freezeConv = false;
  ModelKind kind = ModelKind::MultiView;
  // Views of the sub-dataset the samples were assembled from. A baseline
  // trains on the centre component only.
  std::vector<ViewLabel> viewOrder = lcr_views();
  std::size_t numClasses = 0;
  FilterCounts filters = kDeepIdFilters;

  void validate() const {
    if (!(learningRate >= 0.0))
      throw std::invalid_argument("train config: learning rate must be >= 0");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (minibatchSize < 1)
      throw std::invalid_argument("train config: minibatch size must be >= 1");
    if (numClasses < 1) throw std::invalid_argument("train config: numClasses must be >= 1");
    if (viewOrder.empty()) throw std::invalid_argument("train config: no views");
  }

  /// Views the model itself consumes.
  std::vector<ViewLabel> model_views() const {
    if (kind == ModelKind::Baseline) return {ViewLabel::Center};
    return viewOrder;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double trainError = 0.0;
  double validError = 0.0;
  double testError = 0.0;
  double meanTrainLoss = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunReport {
  TrainConfig config;
  std::vector<EpochRecord> curve;
  std::vector<EpochRecord> pretrainCurve;  // baseline stage of mv/m2 runs
  double trainAccuracy = 0.0;
  double validAccuracy = 0.0;
  double testAccuracy = 0.0;
  std::size_t aggregationDim = 0;
  bool diagnostic = false;  // set for five-view runs
  double wallSeconds = 0.0;
  std::string checkpointPath;
};

struct TrainResult {
  RunReport report;
  Model model;
};

/// Per-split misclassification counts for one pass over `samples`.
struct SplitErrors {
  std::array<std::size_t, 3> wrong{};
  std::array<std::size_t, 3> total{};

  double error(Split s) const {
    const auto i = static_cast<std::size_t>(s);
    return total[i] ? static_cast<double>(wrong[i]) / static_cast<double>(total[i]) : 0.0;
  }
};

inline SplitErrors split_errors(const Model& model, const std::vector<Sample>& samples) {
  SplitErrors e;
  for (const Sample& s : samples) {
    const auto i = static_cast<std::size_t>(s.split);
    ++e.total[i];
    if (predict(model_forward(model, s.images).probs) != s.label) ++e.wrong[i];
  }
  return e;
}

/// Fraction of samples whose arg-max class equals the label.
inline double evaluate(const Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  std::size_t correct = 0;
  for (const Sample& s : samples)
    if (predict(model_forward(model, s.images).probs) == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace detail {

inline void check_samples(const std::vector<Sample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train: no samples");
  bool anyTrain = false;
  for (const Sample& s : samples) {
    if (s.images.size() != cfg.viewOrder.size())
      throw std::invalid_argument("train: sample has " + std::to_string(s.images.size()) +
                                  " views, config expects " + views_string(cfg.viewOrder));
    if (s.label >= cfg.numClasses)
      throw std::invalid_argument("train: label " + std::to_string(s.label) +
                                  " out of range for " + std::to_string(cfg.numClasses) +
                                  " classes");
    anyTrain = anyTrain || s.split == Split::Train;
  }
  if (!anyTrain) throw std::invalid_argument("train: no training samples");
}

/// Runs `epochs` epochs of minibatch SGD on `model` over single-model
/// samples (image count equal to the model's views).
inline std::vector<EpochRecord> run_epochs(Model& model, const std::vector<Sample>& samples,
                                           const TrainConfig& cfg, std::uint64_t stream) {
  std::vector<std::size_t> trainIdx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == Split::Train) trainIdx.push_back(i);
  auto rng = make_rng(cfg.seed, {0x5f, stream});

  std::vector<EpochRecord> curve;
  std::vector<double> losses(samples.size(), 0.0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = trainIdx;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatchSize) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatchSize);
      std::optional<ModelParams> sum;
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = samples[order[b]];
        const ModelCache cache = model_forward(model, s.images);
        losses[order[b]] = softmax_nll(cache.logits, s.label).loss;
        ModelParams g = model_backward(model, cache, s.label);
        if (sum) accumulate(*sum, g);
        else sum = std::move(g);
      }
      scale(*sum, 1.0 / static_cast<double>(end - start));
      sgd_step(model, *sum, cfg.learningRate);
    }
    double lossSum = 0.0;
    for (std::size_t i : trainIdx) lossSum += losses[i];

    const SplitErrors e = split_errors(model, samples);
    curve.push_back({epoch, e.error(Split::Train), e.error(Split::Valid),
                     e.error(Split::Test), lossSum / static_cast<double>(trainIdx.size())});
  }
  return curve;
}

inline void finish_report(RunReport& r) {
  const EpochRecord& last = r.curve.back();
  r.trainAccuracy = 1.0 - last.trainError;
  r.validAccuracy = 1.0 - last.validError;
  r.testAccuracy = 1.0 - last.testError;
}

}  // namespace detail

/// Trains the centre-view baseline on the centre component of `samples`.
inline TrainResult train_baseline(const std::vector<Sample>& samples, TrainConfig cfg) {
  cfg.validate();
  detail::check_samples(samples, cfg);
  const auto start = std::chrono::steady_clock::now();
  cfg.kind = ModelKind::Baseline;
  const std::vector<Sample> centre = center_samples(samples, cfg.viewOrder);
  TrainResult r;
  r.model = make_model(ModelKind::Baseline, {ViewLabel::Center}, cfg.numClasses,
                       derive_seed(cfg.seed, {0xba}), cfg.filters);
  r.report.config = cfg;
  r.report.aggregationDim = r.model.feature_dim();
  r.report.curve = detail::run_epochs(r.model, centre, cfg, 0);
  detail::finish_report(r.report);
  r.report.wallSeconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Full protocol for one model kind. For mv/m2 a baseline is first trained
/// on centre views for the same epoch budget (or `pretrained` is reused)
/// and its conv layers seed every subnet.
inline TrainResult train(const std::vector<Sample>& samples, const TrainConfig& config,
                         const Model* pretrained = nullptr) {
  if (config.kind == ModelKind::Baseline) return train_baseline(samples, config);
  config.validate();
  detail::check_samples(samples, config);
  const auto start = std::chrono::steady_clock::now();

  TrainResult r;
  r.report.config = config;
  Model baseline;
  if (pretrained) {
    baseline = *pretrained;
  } else {
    TrainResult base = train_baseline(samples, config);
    r.report.pretrainCurve = base.report.curve;
    baseline = std::move(base.model);
  }
  Model fresh = make_model(config.kind, config.viewOrder, config.numClasses,
                           derive_seed(config.seed, {0xf0, static_cast<std::uint64_t>(config.kind)}),
                           config.filters);
  r.model = init_from_baseline(baseline, std::move(fresh), config.freezeConv);
  r.report.aggregationDim = r.model.feature_dim();
  r.report.curve = detail::run_epochs(r.model, samples, config, 1);
  detail::finish_report(r.report);
  r.report.wallSeconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Joint training over all five views. Same machinery as `train`; the
/// report is flagged as diagnostic.
inline TrainResult five_view_run(const std::vector<Sample>& samples, TrainConfig config,
                                 const Model* pretrained = nullptr) {
  if (config.viewOrder.size() != kAllViews.size())
    throw std::invalid_argument("five_view_run: expected all five views, got " +
                                views_string(config.viewOrder));
  if (config.kind == ModelKind::Baseline)
    throw std::invalid_argument("five_view_run: needs a multi-view model kind");
  TrainResult r = train(samples, config, pretrained);
  r.report.diagnostic = true;
  return r;
}

}  // namespace mvdeepid
