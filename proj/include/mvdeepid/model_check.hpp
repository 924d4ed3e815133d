#pragma once

// Finite-difference verification of model_backward on narrow models.

#include <cstdint>
#include <random>
#include <vector>

#include "mvdeepid/grad_check.hpp"
#include "mvdeepid/model.hpp"
#include "mvdeepid/reference_forward.hpp"

namespace mvdeepid {

inline constexpr std::size_t kCheckClasses = 3;
inline constexpr std::size_t kCheckHidden = 6;
inline constexpr double kGradTolerance = 1e-4;

/// Narrow model used for gradient checks: filters 2/3/4/5, FC width 6,
/// three classes; two views (L, R) unless it is a baseline.
inline Model reduced_model(ModelKind kind, std::uint64_t seed) {
  std::vector<ViewLabel> views = kind == ModelKind::Baseline
                                     ? std::vector<ViewLabel>{ViewLabel::Center}
                                     : std::vector<ViewLabel>{ViewLabel::Left, ViewLabel::Right};
  Model m = make_model(kind, views, kCheckClasses, seed, kReducedFilters, kCheckHidden);
  // Small nonzero biases so ReLUs are not all balanced on the same side.
  auto rng = make_rng(seed, {0xb1});
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for_each_tensor(m.params, [&](const std::string& name, Tensor& t, bool) {
    if (name.ends_with(".bias"))
      for (double& v : t.data()) v = u(rng);
  });
  return m;
}

inline std::vector<Tensor> random_images(std::size_t count, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x1a});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t(image_shape());
    for (double& v : t.data()) v = u(rng);
    images.push_back(std::move(t));
  }
  return images;
}

/// Max relative error between model_backward and central differences over
/// every parameter and every input pixel of a reduced model. The numeric
/// side is evaluated in extended precision (see reference_forward.hpp).
/// `corruptGradient` negates the analytic subnet0.conv1.weight gradient to
/// exercise the detector.
inline GradCheckResult check_model_gradients(ModelKind kind, std::uint64_t seed, double eps,
                                             bool corruptGradient = false) {
  Model model = reduced_model(kind, seed);
  std::vector<Tensor> images = random_images(model.views(), seed);
  const std::size_t label = seed % kCheckClasses;

  std::vector<Tensor> inputGrads;
  ModelParams grads = model_backward(model, model_forward(model, images), label, &inputGrads);
  if (corruptGradient) grads.subnets.at(0).layer(0).weights *= -1.0;

  // One block per subnet, one for the head, one per input image; each block
  // gets a loss that re-evaluates only what the block feeds.
  const std::size_t views = model.views();
  std::vector<std::vector<GradCheckVariable>> blocks(views + 1);
  std::vector<Tensor*> values;
  for_each_tensor(model.params, [&](const std::string&, Tensor& t, bool) { values.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(grads, [&](const std::string& name, const Tensor& g, bool isConv) {
    const std::size_t block = isConv ? i / (2 * kConvLayers) : views;
    blocks[block].push_back({name, values[i++]->data(), g.data()});
  });

  const reference::CachedLoss loss(model, images, label);
  GradCheckResult worst;
  std::size_t checked = 0;
  auto run = [&](const std::function<double()>& f, std::span<const GradCheckVariable> vars) {
    const GradCheckResult r = grad_check(f, vars, eps);
    checked += r.componentsChecked;
    if (r.maxRelativeError > worst.maxRelativeError || worst.worstVariable.empty()) worst = r;
  };
  for (std::size_t v = 0; v < views; ++v) run([&] { return loss.subnet(v); }, blocks[v]);
  run([&] { return loss.head(); }, blocks[views]);
  for (std::size_t v = 0; v < views; ++v) {
    const GradCheckVariable input[] = {
        {"input." + view_name(model.viewOrder[v]), images[v].data(), inputGrads[v].data()}};
    run([&] { return loss.input(v); }, input);
  }
  worst.componentsChecked = checked;
  return worst;
}

}  // namespace mvdeepid
