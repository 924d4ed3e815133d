#pragma once

// The four-layer DeepID convolutional feature extractor.
//
//   55x47x3 -conv4-> 52x44x20 -pool-> 26x22x20
//           -conv3-> 24x20x40 -pool-> 12x10x40
//           -conv3-> 10x8x60  -pool-> 5x4x60
//           -conv2-> 4x3x80
//
// Every convolution is followed by ReLU. Filter counts are a parameter so
// that narrow clones can be gradient-checked cheaply; kernel sizes and the
// input geometry are fixed.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "mvdeepid/ops.hpp"
#include "mvdeepid/tensor.hpp"

namespace mvdeepid {

inline constexpr std::size_t kImageHeight = 55;
inline constexpr std::size_t kImageWidth = 47;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kConvLayers = 4;
inline constexpr std::array<std::size_t, kConvLayers> kKernelSizes{4, 3, 3, 2};

using FilterCounts = std::array<std::size_t, kConvLayers>;

inline constexpr FilterCounts kDeepIdFilters{20, 40, 60, 80};
inline constexpr FilterCounts kReducedFilters{2, 3, 4, 5};

inline const Shape& image_shape() {
  static const Shape s{kImageHeight, kImageWidth, kImageChannels};
  return s;
}

/// Output shape of conv layer `layer` (0-based) after ReLU and, for the
/// first three layers, pooling.
inline Shape layer_shape(std::size_t layer, const FilterCounts& filters) {
  std::size_t h = kImageHeight, w = kImageWidth;
  for (std::size_t i = 0; i <= layer; ++i) {
    h = h - kKernelSizes[i] + 1;
    w = w - kKernelSizes[i] + 1;
    if (i < kConvLayers - 1) {
      h /= 2;
      w /= 2;
    }
  }
  return {h, w, filters[layer]};
}

struct ConvLayer {
  Tensor weights;
  Tensor bias;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Parameters of one backbone. Construction validates the kernel chain:
/// layer i has weights (k_i, k_i, C_{i-1}, C_i) and bias (C_i), C_{-1} = 3.
class BackboneParams {
 public:
  BackboneParams() = default;

  explicit BackboneParams(std::array<ConvLayer, kConvLayers> layers)
      : layers_(std::move(layers)) {
    std::size_t cin = kImageChannels;
    for (std::size_t i = 0; i < kConvLayers; ++i) {
      const ConvLayer& l = layers_[i];
      if (l.bias.rank() != 1)
        throw std::invalid_argument("backbone conv" + std::to_string(i + 1) +
                                    ": bias must be a vector, got " +
                                    to_string(l.bias.shape()));
      const Shape expected{kKernelSizes[i], kKernelSizes[i], cin,
                           l.bias.dim(0)};
      if (l.weights.shape() != expected)
        throw std::invalid_argument("backbone conv" + std::to_string(i + 1) +
                                    ": weights " + to_string(l.weights.shape()) +
                                    ", expected " + to_string(expected));
      filters_[i] = l.bias.dim(0);
      cin = filters_[i];
    }
  }

  static BackboneParams zeros(const FilterCounts& filters = kDeepIdFilters) {
    std::array<ConvLayer, kConvLayers> layers;
    std::size_t cin = kImageChannels;
    for (std::size_t i = 0; i < kConvLayers; ++i) {
      layers[i].weights =
          Tensor({kKernelSizes[i], kKernelSizes[i], cin, filters[i]});
      layers[i].bias = Tensor({filters[i]});
      cin = filters[i];
    }
    return BackboneParams(std::move(layers));
  }

  const FilterCounts& filters() const { return filters_; }
  bool is_deepid() const { return filters_ == kDeepIdFilters; }

  ConvLayer& layer(std::size_t i) { return layers_.at(i); }
  const ConvLayer& layer(std::size_t i) const { return layers_.at(i); }
  std::array<ConvLayer, kConvLayers>& layers() { return layers_; }
  const std::array<ConvLayer, kConvLayers>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const ConvLayer& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  friend bool operator==(const BackboneParams&,
                         const BackboneParams&) = default;

 private:
  std::array<ConvLayer, kConvLayers> layers_;
  FilterCounts filters_{};
};

/// Forward state of one backbone pass. `layers[i]` is the output of conv
/// layer i+1 after ReLU (and pooling for i < 3); the remaining members are
/// the caches backward needs.
struct BackboneActivations {
  Tensor input;
  std::array<Tensor, kConvLayers> preActivation;
  std::array<Tensor, kConvLayers - 1> prePool;
  std::array<std::vector<std::uint32_t>, kConvLayers - 1> poolArgmax;
  std::array<Tensor, kConvLayers> layers;

  const Tensor& layer3() const { return layers[2]; }
  const Tensor& layer4() const { return layers[3]; }
};

struct BackboneGrads {
  BackboneParams params;
  Tensor input;  // empty unless requested
};

inline BackboneActivations backbone_forward(const Tensor& image,
                                            const BackboneParams& params) {
  if (image.shape() != image_shape())
    throw std::invalid_argument("backbone_forward: image shape " +
                                to_string(image.shape()) + ", expected " +
                                to_string(image_shape()));
  BackboneActivations a;
  a.input = image;
  const Tensor* x = &a.input;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const ConvLayer& l = params.layer(i);
    a.preActivation[i] = conv2d_forward(*x, l.weights, l.bias);
    if (i < kConvLayers - 1) {
      a.prePool[i] = relu(a.preActivation[i]);
      PoolResult p = maxpool2(a.prePool[i]);
      a.layers[i] = std::move(p.output);
      a.poolArgmax[i] = std::move(p.argmax);
    } else {
      a.layers[i] = relu(a.preActivation[i]);
    }
    x = &a.layers[i];
  }
  return a;
}

/// Backpropagates a layer-4 gradient and, optionally, an extra gradient on
/// the pooled layer-3 output (used by multi-level aggregation).
inline BackboneGrads backbone_backward(const BackboneActivations& acts,
                                       const BackboneParams& params,
                                       const Tensor& layer4Grad,
                                       const Tensor* layer3Grad = nullptr,
                                       bool wantInputGrad = true) {
  if (layer4Grad.shape() != acts.layers[3].shape())
    throw std::invalid_argument("backbone_backward: layer4 gradient shape " +
                                to_string(layer4Grad.shape()) + ", expected " +
                                to_string(acts.layers[3].shape()));
  if (layer3Grad && layer3Grad->shape() != acts.layers[2].shape())
    throw std::invalid_argument("backbone_backward: layer3 gradient shape " +
                                to_string(layer3Grad->shape()) + ", expected " +
                                to_string(acts.layers[2].shape()));
  if (params.filters() != FilterCounts{acts.layers[0].dim(2),
                                       acts.layers[1].dim(2),
                                       acts.layers[2].dim(2),
                                       acts.layers[3].dim(2)})
    throw std::invalid_argument(
        "backbone_backward: activations do not match parameters");

  BackboneGrads g;
  std::array<ConvLayer, kConvLayers> layerGrads;
  Tensor upstream = relu_backward(acts.preActivation[3], layer4Grad);
  for (std::size_t i = kConvLayers; i-- > 0;) {
    const Tensor& in = i == 0 ? acts.input : acts.layers[i - 1];
    const bool needInput = i > 0 || wantInputGrad;
    LayerGrads lg =
        conv2d_backward(in, params.layer(i).weights, upstream, needInput);
    layerGrads[i] = ConvLayer{std::move(lg.weights), std::move(lg.bias)};
    if (i == 0) {
      g.input = std::move(lg.input);
      break;
    }
    Tensor pooledGrad = std::move(lg.input);
    if (i == 3 && layer3Grad) pooledGrad += *layer3Grad;
    Tensor prePoolGrad = maxpool2_backward(
        pooledGrad, acts.poolArgmax[i - 1], acts.prePool[i - 1].shape());
    upstream = relu_backward(acts.preActivation[i - 1], prePoolGrad);
  }
  g.params = BackboneParams(std::move(layerGrads));
  return g;
}

/// Glorot-uniform weights, limit sqrt(6 / (fan_in + fan_out)) with
/// fan_in = k*k*C_in and fan_out = k*k*C_out; zero biases.
inline BackboneParams init_backbone(std::uint64_t seed,
                                    const FilterCounts& filters = kDeepIdFilters) {
  BackboneParams p = BackboneParams::zeros(filters);
  std::mt19937_64 rng(seed);
  std::size_t cin = kImageChannels;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const double kk = static_cast<double>(kKernelSizes[i] * kKernelSizes[i]);
    const double limit =
        std::sqrt(6.0 / (kk * static_cast<double>(cin) +
                         kk * static_cast<double>(filters[i])));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : p.layer(i).weights.data()) w = dist(rng);
    cin = filters[i];
  }
  return p;
}

}  // namespace mvdeepid
