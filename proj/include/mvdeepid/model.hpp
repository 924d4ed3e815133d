#pragma once

// The three classifiers: single-view DeepID baseline, MV-DeepID (stacked
// layer-4 features) and M2-DeepID (layer 3 + layer 4 per view). All share
// one head: FC-160 -> ReLU -> C-way softmax.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvdeepid/aggregation.hpp"
#include "mvdeepid/backbone.hpp"
#include "mvdeepid/ops.hpp"
#include "mvdeepid/seeding.hpp"
#include "mvdeepid/tensor.hpp"
#include "mvdeepid/views.hpp"

namespace mvdeepid {

inline constexpr std::size_t kHiddenUnits = 160;
inline constexpr double kDefaultLearningRate = 0.0001;

enum class ModelKind { Baseline, MultiView, MultiLevel };

inline std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Baseline: return "baseline";
    case ModelKind::MultiView: return "mv";
    case ModelKind::MultiLevel: return "m2";
  }
  return "?";
}

inline ModelKind parse_kind(const std::string& s) {
  if (s == "baseline") return ModelKind::Baseline;
  if (s == "mv") return ModelKind::MultiView;
  if (s == "m2") return ModelKind::MultiLevel;
  throw std::invalid_argument("unknown model kind '" + s +
                              "' (expected baseline, mv or m2)");
}

struct HeadParams {
  Tensor fcWeights;  // (hidden, d)
  Tensor fcBias;     // (hidden)
  Tensor smWeights;  // (C, hidden)
  Tensor smBias;     // (C)

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

/// All trainable tensors of a model. Gradients use the same type.
struct ModelParams {
  std::vector<BackboneParams> subnets;
  HeadParams head;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Visits every tensor with a stable name, subnets first.
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  for (std::size_t v = 0; v < params.subnets.size(); ++v) {
    for (std::size_t l = 0; l < kConvLayers; ++l) {
      auto& layer = params.subnets[v].layer(l);
      const std::string prefix =
          "subnet" + std::to_string(v) + ".conv" + std::to_string(l + 1);
      fn(prefix + ".weight", layer.weights, true);
      fn(prefix + ".bias", layer.bias, true);
    }
  }
  fn(std::string("fc.weight"), params.head.fcWeights, false);
  fn(std::string("fc.bias"), params.head.fcBias, false);
  fn(std::string("softmax.weight"), params.head.smWeights, false);
  fn(std::string("softmax.bias"), params.head.smBias, false);
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for_each_tensor(z, [](const std::string&, Tensor& t, bool) { t.fill(0.0); });
  return z;
}

/// Applies `fn(a_i, b_i)` to matching tensors of two parameter sets after
/// checking their shapes agree.
template <typename A, typename B, typename Fn>
void zip_tensors(A& a, B& b, const char* what, Fn&& fn) {
  std::vector<Tensor*> left;
  std::vector<std::string> names;
  for_each_tensor(a, [&](const std::string& n, auto& t, bool) {
    left.push_back(const_cast<Tensor*>(&t));
    names.push_back(n);
  });
  std::size_t i = 0;
  for_each_tensor(b, [&](const std::string& n, auto& t, bool) {
    if (i >= left.size() || names[i] != n || left[i]->shape() != t.shape())
      throw std::invalid_argument(std::string(what) + ": parameter '" + n +
                                  "' does not match");
    fn(*left[i], t);
    ++i;
  });
  if (i != left.size())
    throw std::invalid_argument(std::string(what) + ": parameter count mismatch");
}

inline void accumulate(ModelParams& into, const ModelParams& g) {
  zip_tensors(into, g, "accumulate",
              [](Tensor& a, const Tensor& b) { a += b; });
}

inline void scale(ModelParams& p, double s) {
  for_each_tensor(p, [s](const std::string&, Tensor& t, bool) { t *= s; });
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const Tensor& t, bool) { n += t.size(); });
  return n;
}

inline std::size_t fc_input_dim(ModelKind kind, std::size_t views,
                                const FilterCounts& filters = kDeepIdFilters) {
  if (kind == ModelKind::MultiLevel) return views * multilevel_block_length(filters);
  return AggregationSpec::for_layer4(views, filters).dimension();
}

struct Model {
  ModelKind kind = ModelKind::MultiView;
  std::vector<ViewLabel> viewOrder;
  std::size_t numClasses = 0;
  std::size_t hidden = kHiddenUnits;
  FilterCounts filters = kDeepIdFilters;
  ModelParams params;
  bool freezeConv = false;
  // Bumped by every parameter update; forward caches record it so a stale
  // cache cannot be fed to backward.
  std::uint64_t version = 0;

  std::size_t views() const { return viewOrder.size(); }
  std::size_t feature_dim() const { return fc_input_dim(kind, views(), filters); }

  /// Throws unless every tensor has the shape implied by kind, views,
  /// filters, hidden width and class count.
  void validate() const {
    auto fail = [](const std::string& why) {
      throw std::invalid_argument("model: " + why);
    };
    if (viewOrder.empty()) fail("no views");
    if (kind == ModelKind::Baseline && viewOrder.size() != 1)
      fail("baseline takes exactly one view, got " + views_string(viewOrder));
    if (numClasses < 1) fail("numClasses must be positive");
    if (params.subnets.size() != viewOrder.size())
      fail(std::to_string(params.subnets.size()) + " subnets for " +
           std::to_string(viewOrder.size()) + " views");
    for (const BackboneParams& s : params.subnets)
      if (s.filters() != filters) fail("subnet filter counts disagree");
    const HeadParams& h = params.head;
    const std::size_t d = feature_dim();
    if (h.fcWeights.shape() != Shape{hidden, d})
      fail("fc.weight shape " + to_string(h.fcWeights.shape()) + ", expected " +
           to_string(Shape{hidden, d}));
    if (h.fcBias.shape() != Shape{hidden}) fail("fc.bias shape");
    if (h.smWeights.shape() != Shape{numClasses, hidden})
      fail("softmax.weight shape " + to_string(h.smWeights.shape()) +
           ", expected " + to_string(Shape{numClasses, hidden}));
    if (h.smBias.shape() != Shape{numClasses}) fail("softmax.bias shape");
  }

  friend bool operator==(const Model&, const Model&) = default;
};

namespace detail {

inline void glorot_fill(Tensor& w, std::size_t fanIn, std::size_t fanOut,
                        std::mt19937_64& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fanIn + fanOut));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w.data()) v = dist(rng);
}

}  // namespace detail

/// All-zero model of the given geometry.
inline Model zero_model(ModelKind kind, std::vector<ViewLabel> views,
                        std::size_t numClasses,
                        const FilterCounts& filters = kDeepIdFilters,
                        std::size_t hidden = kHiddenUnits) {
  Model m;
  m.kind = kind;
  m.viewOrder = std::move(views);
  m.numClasses = numClasses;
  m.hidden = hidden;
  m.filters = filters;
  for (std::size_t i = 0; i < m.viewOrder.size(); ++i)
    m.params.subnets.push_back(BackboneParams::zeros(filters));
  const std::size_t d = m.feature_dim();
  m.params.head.fcWeights = Tensor({hidden, d});
  m.params.head.fcBias = Tensor({hidden});
  m.params.head.smWeights = Tensor({numClasses, hidden});
  m.params.head.smBias = Tensor({numClasses});
  m.validate();
  return m;
}

/// Freshly initialized model: Glorot-uniform weights, zero biases, every
/// tensor seeded from (seed, role) so it is reproducible per seed.
inline Model make_model(ModelKind kind, std::vector<ViewLabel> views,
                        std::size_t numClasses, std::uint64_t seed,
                        const FilterCounts& filters = kDeepIdFilters,
                        std::size_t hidden = kHiddenUnits) {
  Model m = zero_model(kind, std::move(views), numClasses, filters, hidden);
  for (std::size_t i = 0; i < m.views(); ++i)
    m.params.subnets[i] = init_backbone(derive_seed(seed, {1, i}), filters);
  auto fcRng = make_rng(seed, {2});
  detail::glorot_fill(m.params.head.fcWeights, m.feature_dim(), hidden, fcRng);
  auto smRng = make_rng(seed, {3});
  detail::glorot_fill(m.params.head.smWeights, hidden, numClasses, smRng);
  return m;
}

/// Everything backward needs from one forward pass.
struct ModelCache {
  ModelKind kind = ModelKind::MultiView;
  std::uint64_t version = 0;
  std::vector<BackboneActivations> backbones;
  Tensor features;
  Tensor hiddenPre;
  Tensor hidden;
  Tensor logits;
  Tensor probs;
};

/// Forward pass on images already ordered as `model.viewOrder`.
inline ModelCache model_forward(const Model& model, std::span<const Tensor> images) {
  if (images.size() != model.views())
    throw std::invalid_argument("model_forward: got " + std::to_string(images.size()) +
                                " images for " + std::to_string(model.views()) +
                                " views");
  ModelCache c;
  c.kind = model.kind;
  c.version = model.version;
  c.backbones.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    c.backbones.push_back(backbone_forward(images[i], model.params.subnets[i]));

  if (model.kind == ModelKind::MultiLevel) {
    std::vector<MultiLevelFeatures> levels;
    for (const BackboneActivations& a : c.backbones)
      levels.push_back({&a.layer3(), &a.layer4()});
    c.features = aggregate_multilevel(levels, model.filters);
  } else {
    std::vector<Tensor> tops;
    for (const BackboneActivations& a : c.backbones) tops.push_back(a.layer4());
    c.features = aggregate_views(tops).flattened();
  }
  const HeadParams& h = model.params.head;
  c.hiddenPre = fc_forward(c.features, h.fcWeights, h.fcBias);
  c.hidden = relu(c.hiddenPre);
  c.logits = fc_forward(c.hidden, h.smWeights, h.smBias);
  c.probs = softmax(c.logits);
  return c;
}

using ViewSet = std::map<ViewLabel, Tensor>;

/// Forward pass on images keyed by view; every view of the model must be
/// present.
inline ModelCache model_forward(const Model& model, const ViewSet& sample) {
  std::vector<Tensor> ordered;
  ordered.reserve(model.views());
  for (ViewLabel v : model.viewOrder) {
    auto it = sample.find(v);
    if (it == sample.end())
      throw std::invalid_argument("sample is missing view '" + view_name(v) + "'");
    ordered.push_back(it->second);
  }
  return model_forward(model, ordered);
}

namespace detail {
inline void require_kind(const Model& m, ModelKind k, const char* fn) {
  if (m.kind != k)
    throw std::invalid_argument(std::string(fn) + ": model kind is " +
                                kind_name(m.kind) + ", expected " + kind_name(k));
}
}  // namespace detail

inline ModelCache mv_forward(const ViewSet& sample, const Model& model) {
  detail::require_kind(model, ModelKind::MultiView, "mv_forward");
  return model_forward(model, sample);
}

inline ModelCache m2_forward(const ViewSet& sample, const Model& model) {
  detail::require_kind(model, ModelKind::MultiLevel, "m2_forward");
  return model_forward(model, sample);
}

inline Tensor baseline_forward(const Tensor& image, const Model& model) {
  detail::require_kind(model, ModelKind::Baseline, "baseline_forward");
  return model_forward(model, std::span<const Tensor>(&image, 1)).probs;
}

/// Exact NLL gradients of every parameter for one sample. When
/// `inputGrads` is given it receives the gradient for each view's image.
inline ModelParams model_backward(const Model& model, const ModelCache& cache,
                                  std::size_t label,
                                  std::vector<Tensor>* inputGrads = nullptr) {
  if (cache.kind != model.kind || cache.backbones.size() != model.views() ||
      cache.version != model.version ||
      cache.features.size() != model.feature_dim() ||
      cache.probs.size() != model.numClasses)
    throw std::invalid_argument(
        "model_backward: cache does not belong to this model state");
  const HeadParams& h = model.params.head;
  ModelParams g;
  const Tensor dLogits = softmax_nll_backward(cache.probs, label);
  LayerGrads sm = fc_backward(cache.hidden, h.smWeights, dLogits);
  const Tensor dHidden = relu_backward(cache.hiddenPre, sm.input);
  LayerGrads fc = fc_backward(cache.features, h.fcWeights, dHidden);
  g.head = {std::move(fc.weights), std::move(fc.bias), std::move(sm.weights),
            std::move(sm.bias)};

  std::vector<std::pair<Tensor, Tensor>> parts;  // (layer3, layer4) per view
  if (model.kind == ModelKind::MultiLevel) {
    parts = split_multilevel(fc.input, model.views(), model.filters);
  } else {
    const Shape stacked =
        AggregationSpec::for_layer4(model.views(), model.filters).stacked_shape();
    for (Tensor& t : split_views(fc.input.reshaped(stacked), model.views()))
      parts.emplace_back(Tensor(), std::move(t));
  }
  const bool multiLevel = model.kind == ModelKind::MultiLevel;
  if (inputGrads) inputGrads->clear();
  g.subnets.reserve(model.views());
  for (std::size_t i = 0; i < model.views(); ++i) {
    BackboneGrads bg = backbone_backward(cache.backbones[i], model.params.subnets[i],
                                         parts[i].second,
                                         multiLevel ? &parts[i].first : nullptr,
                                         inputGrads != nullptr);
    g.subnets.push_back(std::move(bg.params));
    if (inputGrads) inputGrads->push_back(std::move(bg.input));
  }
  return g;
}

/// theta <- theta - lr * g. Conv parameters stay fixed when the model has
/// freezeConv set.
inline void sgd_step(Model& model, const ModelParams& grads, double lr) {
  std::vector<bool> conv;
  for_each_tensor(model.params,
                  [&](const std::string&, Tensor&, bool isConv) { conv.push_back(isConv); });
  std::size_t i = 0;
  zip_tensors(model.params, grads, "sgd_step", [&](Tensor& p, const Tensor& g) {
    if (!(conv[i++] && model.freezeConv))
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  });
  ++model.version;
}

/// Copies the baseline's conv layers into every subnet of `target`; the
/// target's head keeps its own fresh initialization.
inline Model init_from_baseline(const Model& baseline, Model target,
                                bool freezeConv) {
  if (baseline.params.subnets.size() != 1)
    throw std::invalid_argument("init_from_baseline: baseline must have one subnet");
  if (baseline.filters != target.filters)
    throw std::invalid_argument(
        "init_from_baseline: baseline and target backbone shapes differ");
  for (BackboneParams& s : target.params.subnets) s = baseline.params.subnets[0];
  target.freezeConv = freezeConv;
  target.version = 0;
  return target;
}

/// Index of the largest probability; ties go to the lowest index.
inline std::size_t predict(const Tensor& probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

}  // namespace mvdeepid
