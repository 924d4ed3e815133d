#pragma once

// Differentiable primitives. All functions are pure: outputs depend only on
// the arguments, so they may be called concurrently on distinct data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvdeepid/tensor.hpp"

namespace mvdeepid {

/// Gradients of a parameterized layer. `input` mirrors the layer input;
/// `weights` and `bias` mirror the layer parameters. `input` is left empty
/// when the caller did not ask for it.
struct LayerGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

namespace detail {

inline void check_conv_shapes(const Tensor& input, const Tensor& weights,
                              const Tensor& bias) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("conv2d: " + why + " (input " +
                                to_string(input.shape()) + ", weights " +
                                to_string(weights.shape()) + ", bias " +
                                to_string(bias.shape()) + ")");
  };
  if (input.rank() != 3) fail("input must be rank 3 (H, W, C)");
  if (weights.rank() != 4) fail("weights must be rank 4 (k, k, Cin, Cout)");
  if (weights.dim(0) != weights.dim(1)) fail("kernel must be square");
  if (weights.dim(2) != input.dim(2)) fail("input channel mismatch");
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(3))
    fail("bias length must equal output channels");
  if (weights.dim(0) > input.dim(0) || weights.dim(0) > input.dim(1))
    fail("kernel larger than input");
}

}  // namespace detail

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Unfolds every k x k x C receptive field into one row, columns ordered
/// (dy, dx, c) to match the kernel layout.
inline RowMatrix im2col(const Tensor& input, std::size_t k) {
  const std::size_t width = input.dim(1), ci = input.dim(2);
  const std::size_t ho = input.dim(0) - k + 1, wo = width - k + 1;
  RowMatrix cols(static_cast<Eigen::Index>(ho * wo), static_cast<Eigen::Index>(k * k * ci));
  const double* in = input.raw();
  double* dst = cols.data();
  for (std::size_t y = 0; y < ho; ++y)
    for (std::size_t x = 0; x < wo; ++x)
      for (std::size_t dy = 0; dy < k; ++dy) {
        const double* src = in + ((y + dy) * width + x) * ci;
        dst = std::copy(src, src + k * ci, dst);
      }
  return cols;
}

}  // namespace detail

/// Valid (unpadded) stride-1 convolution.
///   out[y,x,o] = bias[o] + sum_{dy,dx,c} in[y+dy, x+dx, c] * w[dy,dx,c,o]
/// Evaluated as an im2col product: (patches x k*k*Cin) * (k*k*Cin x Cout).
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                             const Tensor& bias) {
  detail::check_conv_shapes(input, weights, bias);
  const std::size_t k = weights.dim(0), co = weights.dim(3);
  const std::size_t ho = input.dim(0) - k + 1, wo = input.dim(1) - k + 1;
  const auto rows = static_cast<Eigen::Index>(ho * wo);
  const auto depth = static_cast<Eigen::Index>(k * k * input.dim(2));
  const auto cols = static_cast<Eigen::Index>(co);

  Tensor out({ho, wo, co});
  detail::MatrixMap o(out.raw(), rows, cols);
  o.noalias() = detail::im2col(input, k) *
                detail::ConstMatrixMap(weights.raw(), depth, cols);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.raw(), cols);
  return out;
}

/// Exact gradients of conv2d_forward contracted with `outputGrad`.
/// The input gradient is skipped when `wantInputGrad` is false (first layer).
inline LayerGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                                  const Tensor& outputGrad,
                                  bool wantInputGrad = true) {
  if (weights.rank() != 4)
    throw std::invalid_argument("conv2d_backward: weights must be rank 4, got " +
                                to_string(weights.shape()));
  detail::check_conv_shapes(input, weights, Tensor({weights.dim(3)}));
  const std::size_t width = input.dim(1), ci = input.dim(2);
  const std::size_t k = weights.dim(0), co = weights.dim(3);
  const std::size_t ho = input.dim(0) - k + 1, wo = width - k + 1;
  if (outputGrad.shape() != Shape{ho, wo, co})
    throw std::invalid_argument("conv2d_backward: output gradient shape " +
                                to_string(outputGrad.shape()) +
                                " does not match forward output " +
                                to_string(Shape{ho, wo, co}));
  const auto rows = static_cast<Eigen::Index>(ho * wo);
  const auto depth = static_cast<Eigen::Index>(k * k * ci);
  const auto cols = static_cast<Eigen::Index>(co);
  const detail::ConstMatrixMap g(outputGrad.raw(), rows, cols);

  LayerGrads grads;
  grads.weights = Tensor(weights.shape());
  grads.bias = Tensor({co});
  detail::MatrixMap(grads.weights.raw(), depth, cols).noalias() =
      detail::im2col(input, k).transpose() * g;
  Eigen::Map<Eigen::RowVectorXd>(grads.bias.raw(), cols) = g.colwise().sum();

  if (wantInputGrad) {
    const detail::RowMatrix patchGrad =
        g * detail::ConstMatrixMap(weights.raw(), depth, cols).transpose();
    grads.input = Tensor(input.shape());
    double* ig = grads.input.raw();
    const double* src = patchGrad.data();
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x)
        for (std::size_t dy = 0; dy < k; ++dy) {
          double* dst = ig + ((y + dy) * width + x) * ci;
          for (std::size_t j = 0; j < k * ci; ++j) dst[j] += *src++;
        }
  }
  return grads;
}

/// Output of a 2x2 stride-2 max pool plus, per output cell, the flat index
/// of the winning input element.
struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;
};

/// Disjoint 2x2 max pooling. Ties go to the row-major-first cell.
inline PoolResult maxpool2(const Tensor& input) {
  if (input.rank() != 3)
    throw std::invalid_argument("maxpool2: input must be rank 3, got " +
                                to_string(input.shape()));
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("maxpool2: height and width must be even, got " +
                                to_string(input.shape()));
  PoolResult r{Tensor({h / 2, w / 2, c}), {}};
  r.argmax.resize(r.output.size());
  for (std::size_t y = 0; y < h / 2; ++y) {
    for (std::size_t x = 0; x < w / 2; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * y) * w + 2 * x) * c + ch;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * w + (2 * x + dx)) * c + ch;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t out = (y * (w / 2) + x) * c + ch;
        r.output[out] = input[best];
        r.argmax[out] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

/// Routes each output gradient to its window's argmax cell.
inline Tensor maxpool2_backward(const Tensor& outputGrad,
                                const std::vector<std::uint32_t>& argmax,
                                const Shape& inputShape) {
  if (outputGrad.size() != argmax.size() || inputShape.size() != 3 ||
      outputGrad.shape() !=
          Shape{inputShape[0] / 2, inputShape[1] / 2, inputShape[2]})
    throw std::invalid_argument("maxpool2_backward: gradient shape " +
                                to_string(outputGrad.shape()) +
                                " inconsistent with input shape " +
                                to_string(inputShape));
  Tensor grad(inputShape);
  for (std::size_t i = 0; i < argmax.size(); ++i)
    grad[argmax[i]] += outputGrad[i];
  return grad;
}

inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Passes the gradient where the forward input was strictly positive.
inline Tensor relu_backward(const Tensor& input, const Tensor& outputGrad) {
  Tensor::require_same_shape(input, outputGrad, "relu_backward");
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    grad[i] = input[i] > 0.0 ? outputGrad[i] : 0.0;
  return grad;
}

/// y = W x + b, with W stored (m, d).
inline Tensor fc_forward(const Tensor& x, const Tensor& weights,
                         const Tensor& bias) {
  if (x.rank() != 1 || weights.rank() != 2 || bias.rank() != 1 ||
      weights.dim(1) != x.dim(0) || weights.dim(0) != bias.dim(0))
    throw std::invalid_argument("fc_forward: dimension mismatch (x " +
                                to_string(x.shape()) + ", W " +
                                to_string(weights.shape()) + ", b " +
                                to_string(bias.shape()) + ")");
  const auto m = static_cast<Eigen::Index>(weights.dim(0));
  const auto d = static_cast<Eigen::Index>(weights.dim(1));
  Tensor y({weights.dim(0)});
  Eigen::Map<Eigen::VectorXd> out(y.raw(), m);
  out.noalias() = detail::ConstMatrixMap(weights.raw(), m, d) *
                  Eigen::Map<const Eigen::VectorXd>(x.raw(), d);
  out += Eigen::Map<const Eigen::VectorXd>(bias.raw(), m);
  return y;
}

inline LayerGrads fc_backward(const Tensor& x, const Tensor& weights,
                              const Tensor& outputGrad,
                              bool wantInputGrad = true) {
  if (x.rank() != 1 || weights.rank() != 2 || outputGrad.rank() != 1 ||
      weights.dim(1) != x.dim(0) || weights.dim(0) != outputGrad.dim(0))
    throw std::invalid_argument("fc_backward: dimension mismatch (x " +
                                to_string(x.shape()) + ", W " +
                                to_string(weights.shape()) + ", dy " +
                                to_string(outputGrad.shape()) + ")");
  const auto m = static_cast<Eigen::Index>(weights.dim(0));
  const auto d = static_cast<Eigen::Index>(weights.dim(1));
  const Eigen::Map<const Eigen::VectorXd> xv(x.raw(), d);
  const Eigen::Map<const Eigen::VectorXd> gv(outputGrad.raw(), m);
  LayerGrads g;
  g.weights = Tensor(weights.shape());
  g.bias = outputGrad;
  detail::MatrixMap(g.weights.raw(), m, d).noalias() = gv * xv.transpose();
  if (wantInputGrad) {
    g.input = Tensor(x.shape());
    Eigen::Map<Eigen::VectorXd>(g.input.raw(), d).noalias() =
        detail::ConstMatrixMap(weights.raw(), m, d).transpose() * gv;
  }
  return g;
}

/// Max-shifted softmax.
inline Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1)
    throw std::invalid_argument("softmax: logits must be a vector, got " +
                                to_string(logits.shape()));
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits.data()) mx = std::max(mx, v);
  Tensor p(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p.data()) v /= sum;
  return p;
}

struct SoftmaxNll {
  Tensor probs;
  double loss;
};

/// Softmax probabilities and the negative log-likelihood of `label`.
/// The loss is evaluated as log-sum-exp minus the label logit so it stays
/// finite even when probs[label] underflows.
inline SoftmaxNll softmax_nll(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1 || label >= logits.size())
    throw std::invalid_argument("softmax_nll: label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(logits.size()) + " classes");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits.data()) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits.data()) sum += std::exp(v - mx);
  SoftmaxNll r{softmax(logits), 0.0};
  r.loss = std::max(0.0, std::log(sum) + mx - logits[label]);
  return r;
}

/// d loss / d logits = probs - onehot(label).
inline Tensor softmax_nll_backward(const Tensor& probs, std::size_t label) {
  if (probs.rank() != 1 || label >= probs.size())
    throw std::invalid_argument("softmax_nll_backward: label " +
                                std::to_string(label) + " out of range");
  Tensor g = probs;
  g[label] -= 1.0;
  return g;
}

}  // namespace mvdeepid
