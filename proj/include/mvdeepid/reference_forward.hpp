#pragma once

// Extended-precision re-evaluation of the forward pass, used as the numeric
// side of gradient checks. Central differences at eps = 1e-5 on a double
// loss of size ~1 carry ~1e-12 of rounding noise, which is as large as the
// smallest input-pixel gradients of a narrow network. In long double the
// noise drops by three orders of magnitude.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "mvdeepid/model.hpp"

namespace mvdeepid::reference {

using Real = long double;

/// Row-major (h, w, c) block of extended-precision values.
struct Grid {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<Real> v;

  Grid() = default;
  Grid(std::size_t h_, std::size_t w_, std::size_t c_) : h(h_), w(w_), c(c_), v(h_ * w_ * c_) {}

  Real& at(std::size_t y, std::size_t x, std::size_t ch) { return v[(y * w + x) * c + ch]; }
  Real at(std::size_t y, std::size_t x, std::size_t ch) const { return v[(y * w + x) * c + ch]; }
};

/// ReLU(conv) for output rows [y0, y1) and columns [x0, x1) of `out`.
/// `In` is a Grid or a rank-3 Tensor.
template <typename In>
void conv_relu(const In& in, const ConvLayer& l, Grid& out, std::size_t y0, std::size_t y1,
               std::size_t x0, std::size_t x1) {
  const std::size_t k = l.weights.dim(0), ci = l.weights.dim(2), co = out.c;
  const double* w = l.weights.raw();
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x)
      for (std::size_t o = 0; o < co; ++o) {
        Real s = l.bias[o];
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx)
            for (std::size_t c = 0; c < ci; ++c)
              s += static_cast<Real>(in.at(y + dy, x + dx, c)) *
                   static_cast<Real>(w[((dy * k + dx) * ci + c) * co + o]);
        out.at(y, x, o) = s > 0 ? s : 0;
      }
}

inline Grid conv_relu(const Grid& in, const ConvLayer& l) {
  const std::size_t k = l.weights.dim(0);
  Grid out(in.h - k + 1, in.w - k + 1, l.bias.size());
  conv_relu(in, l, out, 0, out.h, 0, out.w);
  return out;
}

inline Grid pool(const Grid& in) {
  Grid out(in.h / 2, in.w / 2, in.c);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x)
      for (std::size_t c = 0; c < in.c; ++c)
        out.at(y, x, c) = std::max({in.at(2 * y, 2 * x, c), in.at(2 * y, 2 * x + 1, c),
                                    in.at(2 * y + 1, 2 * x, c), in.at(2 * y + 1, 2 * x + 1, c)});
  return out;
}

struct Backbone {
  Grid conv1;  // post-ReLU, before pooling
  Grid layer3, layer4;
};

inline Backbone backbone_from_conv1(Grid conv1, const BackboneParams& p) {
  Backbone b;
  b.conv1 = std::move(conv1);
  Grid x = conv_relu(pool(b.conv1), p.layer(1));
  b.layer3 = pool(conv_relu(pool(x), p.layer(2)));
  b.layer4 = conv_relu(b.layer3, p.layer(3));
  return b;
}

inline Backbone backbone(const Tensor& image, const BackboneParams& p) {
  const std::size_t k = p.layer(0).weights.dim(0);
  Grid conv1(image.dim(0) - k + 1, image.dim(1) - k + 1, p.layer(0).bias.size());
  conv_relu(image, p.layer(0), conv1, 0, conv1.h, 0, conv1.w);
  return backbone_from_conv1(std::move(conv1), p);
}

/// Re-evaluates `base` after pixel (py, px, *) of `image` changed: only the
/// conv1 outputs whose window covers that pixel are recomputed.
inline Backbone backbone_after_pixel_change(const Backbone& base, const Tensor& image,
                                            const BackboneParams& p, std::size_t py,
                                            std::size_t px) {
  const std::size_t k = p.layer(0).weights.dim(0);
  Grid conv1 = base.conv1;
  const std::size_t y0 = py + 1 >= k ? py + 1 - k : 0, x0 = px + 1 >= k ? px + 1 - k : 0;
  conv_relu(image, p.layer(0), conv1, y0, std::min(py + 1, conv1.h), x0, std::min(px + 1, conv1.w));
  return backbone_from_conv1(std::move(conv1), p);
}

/// Head input vector in the model's aggregation order.
inline std::vector<Real> features(const Model& m, const std::vector<const Backbone*>& views) {
  std::vector<Real> f;
  f.reserve(m.feature_dim());
  for (const Backbone* b : views) {
    if (m.kind == ModelKind::MultiLevel) f.insert(f.end(), b->layer3.v.begin(), b->layer3.v.end());
    f.insert(f.end(), b->layer4.v.begin(), b->layer4.v.end());
  }
  return f;
}

inline Real nll(const Model& m, const std::vector<Real>& f, std::size_t label) {
  const HeadParams& h = m.params.head;
  std::vector<Real> hidden(m.hidden);
  for (std::size_t i = 0; i < m.hidden; ++i) {
    Real s = h.fcBias[i];
    for (std::size_t j = 0; j < f.size(); ++j) s += static_cast<Real>(h.fcWeights.at(i, j)) * f[j];
    hidden[i] = s > 0 ? s : 0;
  }
  std::vector<Real> z(m.numClasses);
  for (std::size_t i = 0; i < m.numClasses; ++i) {
    Real s = h.smBias[i];
    for (std::size_t j = 0; j < m.hidden; ++j) s += static_cast<Real>(h.smWeights.at(i, j)) * hidden[j];
    z[i] = s;
  }
  const Real mx = *std::max_element(z.begin(), z.end());
  Real sum = 0;
  for (Real v : z) sum += std::exp(v - mx);
  return mx + std::log(sum) - z[label];
}

/// NLL of one sample with per-view activations cached, so that perturbing
/// one parameter block or one pixel re-evaluates only what depends on it.
/// All losses are returned relative to the unperturbed loss.
class CachedLoss {
 public:
  CachedLoss(const Model& model, const std::vector<Tensor>& images, std::size_t label)
      : model_(model), images_(images), reference_(images), label_(label) {
    for (std::size_t v = 0; v < images.size(); ++v)
      cached_.push_back(backbone(images[v], model.params.subnets[v]));
    base_ = loss_with({});
  }

  /// After a change to the head parameters.
  double head() const { return static_cast<double>(loss_with({}) - base_); }

  /// After a change to subnet `view`'s conv parameters.
  double subnet(std::size_t view) const {
    const Backbone b = backbone(images_[view], model_.params.subnets[view]);
    return static_cast<double>(loss_with({{view, &b}}) - base_);
  }

  /// After at most one pixel of image `view` changed.
  double input(std::size_t view) const {
    const Tensor& now = images_[view];
    const Tensor& ref = reference_[view];
    std::size_t i = 0;
    while (i < now.size() && now[i] == ref[i]) ++i;
    if (i == now.size()) return static_cast<double>(loss_with({}) - base_);
    const std::size_t pixel = i / now.dim(2);
    const Backbone b = backbone_after_pixel_change(cached_[view], now, model_.params.subnets[view],
                                                   pixel / now.dim(1), pixel % now.dim(1));
    return static_cast<double>(loss_with({{view, &b}}) - base_);
  }

 private:
  struct Override {
    std::size_t view;
    const Backbone* backbone;
  };

  Real loss_with(std::optional<Override> o) const {
    std::vector<const Backbone*> views;
    for (std::size_t v = 0; v < cached_.size(); ++v)
      views.push_back(o && o->view == v ? o->backbone : &cached_[v]);
    return nll(model_, features(model_, views), label_);
  }

  const Model& model_;
  const std::vector<Tensor>& images_;
  std::vector<Tensor> reference_;
  std::size_t label_;
  std::vector<Backbone> cached_;
  Real base_ = 0;
};

}  // namespace mvdeepid::reference
