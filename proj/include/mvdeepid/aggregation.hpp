#pragma once

// The aggregating layer: per-view top features stacked into one shared
// representation, and the multi-level variant that also carries layer 3.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvdeepid/backbone.hpp"
#include "mvdeepid/tensor.hpp"

namespace mvdeepid {

/// Geometry of the stacked representation: N views of (H, W, D) tensors
/// give d = (N * H) * W * D values.
struct AggregationSpec {
  std::size_t views = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t depth = 0;

  std::size_t dimension() const { return (views * height) * width * depth; }
  Shape stacked_shape() const { return {views * height, width, depth}; }

  static AggregationSpec for_layer4(std::size_t views,
                                    const FilterCounts& filters = kDeepIdFilters) {
    const Shape s = layer_shape(3, filters);
    return {views, s[0], s[1], s[2]};
  }
};

/// Concatenates view tensors along the height axis: view i occupies rows
/// [i*H, (i+1)*H).
inline Tensor aggregate_views(std::span<const Tensor> features) {
  if (features.empty())
    throw std::invalid_argument("aggregate_views: no views given");
  const Shape& s = features[0].shape();
  if (s.size() != 3)
    throw std::invalid_argument("aggregate_views: view tensors must be rank 3, got " +
                                to_string(s));
  for (std::size_t i = 1; i < features.size(); ++i)
    if (features[i].shape() != s)
      throw std::invalid_argument("aggregate_views: view " + std::to_string(i) +
                                  " has shape " + to_string(features[i].shape()) +
                                  ", view 0 has " + to_string(s));
  // Row-major (H, W, D) blocks placed one after another are exactly the
  // height-stacked tensor.
  Tensor out({features.size() * s[0], s[1], s[2]});
  const std::size_t block = features[0].size();
  for (std::size_t i = 0; i < features.size(); ++i)
    std::copy(features[i].data().begin(), features[i].data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * block));
  return out;
}

/// Inverse of aggregate_views for gradients: slices the stacked tensor back
/// into `views` tensors of height H.
inline std::vector<Tensor> split_views(const Tensor& stacked, std::size_t views) {
  if (stacked.rank() != 3 || views == 0 || stacked.dim(0) % views != 0)
    throw std::invalid_argument("split_views: cannot split " +
                                to_string(stacked.shape()) + " into " +
                                std::to_string(views) + " views");
  const Shape s{stacked.dim(0) / views, stacked.dim(1), stacked.dim(2)};
  const std::size_t block = element_count(s);
  std::vector<Tensor> out;
  out.reserve(views);
  for (std::size_t i = 0; i < views; ++i) {
    auto first = stacked.data().begin() + static_cast<std::ptrdiff_t>(i * block);
    out.emplace_back(s, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(block)));
  }
  return out;
}

struct MultiLevelFeatures {
  const Tensor* layer3;
  const Tensor* layer4;
};

inline std::size_t multilevel_block_length(const FilterCounts& filters = kDeepIdFilters) {
  return element_count(layer_shape(2, filters)) + element_count(layer_shape(3, filters));
}

/// Per view, layer 3 then layer 4 flattened row-major; views concatenated
/// in order.
inline Tensor aggregate_multilevel(std::span<const MultiLevelFeatures> perView,
                                   const FilterCounts& filters = kDeepIdFilters) {
  if (perView.empty())
    throw std::invalid_argument("aggregate_multilevel: no views given");
  const Shape s3 = layer_shape(2, filters), s4 = layer_shape(3, filters);
  const std::size_t block = element_count(s3) + element_count(s4);
  Tensor out({perView.size() * block});
  auto it = out.data().begin();
  for (std::size_t i = 0; i < perView.size(); ++i) {
    const MultiLevelFeatures& f = perView[i];
    if (!f.layer3 || !f.layer4 || f.layer3->shape() != s3 ||
        f.layer4->shape() != s4)
      throw std::invalid_argument(
          "aggregate_multilevel: view " + std::to_string(i) + " has shapes " +
          (f.layer3 ? to_string(f.layer3->shape()) : "(none)") + " / " +
          (f.layer4 ? to_string(f.layer4->shape()) : "(none)") + ", expected " +
          to_string(s3) + " / " + to_string(s4));
    it = std::copy(f.layer3->data().begin(), f.layer3->data().end(), it);
    it = std::copy(f.layer4->data().begin(), f.layer4->data().end(), it);
  }
  return out;
}

/// Gradient of aggregate_multilevel: per view, (layer3 grad, layer4 grad).
inline std::vector<std::pair<Tensor, Tensor>> split_multilevel(
    const Tensor& grad, std::size_t views,
    const FilterCounts& filters = kDeepIdFilters) {
  const Shape s3 = layer_shape(2, filters), s4 = layer_shape(3, filters);
  const std::size_t n3 = element_count(s3), n4 = element_count(s4);
  if (grad.rank() != 1 || grad.size() != views * (n3 + n4))
    throw std::invalid_argument("split_multilevel: gradient length " +
                                std::to_string(grad.size()) + ", expected " +
                                std::to_string(views * (n3 + n4)));
  std::vector<std::pair<Tensor, Tensor>> out;
  auto it = grad.data().begin();
  for (std::size_t i = 0; i < views; ++i) {
    std::vector<double> a(it, it + static_cast<std::ptrdiff_t>(n3));
    it += static_cast<std::ptrdiff_t>(n3);
    std::vector<double> b(it, it + static_cast<std::ptrdiff_t>(n4));
    it += static_cast<std::ptrdiff_t>(n4);
    out.emplace_back(Tensor(s3, std::move(a)), Tensor(s4, std::move(b)));
  }
  return out;
}

}  // namespace mvdeepid
