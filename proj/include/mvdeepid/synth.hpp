#pragma once

// Procedural multi-view face stand-ins.
//
// An identity is an ellipsoidal head carrying coloured Gaussian patches:
// two eyes, nose and mouth on the front plus a handful of texture marks
// scattered over the surface. A view rotates the head (yaw for L/R, pitch
// for U/D) and ray-casts it orthographically onto the 55x47 canvas, so
// side views reveal surface detail the frontal view cannot see.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "mvdeepid/backbone.hpp"
#include "mvdeepid/seeding.hpp"
#include "mvdeepid/tensor.hpp"
#include "mvdeepid/views.hpp"

namespace mvdeepid {

using Vec3 = std::array<double, 3>;
using Rgb = std::array<double, 3>;

/// A coloured anisotropic Gaussian patch painted on the head surface.
struct SurfacePatch {
  Vec3 position;  // head frame, inside the ellipsoid
  double sigmaX = 0.1;
  double sigmaY = 0.1;
  Rgb color{};
  double strength = 1.0;

  friend bool operator==(const SurfacePatch&, const SurfacePatch&) = default;
};

struct IdentityParams {
  Vec3 headAxes{};  // semi-axes (x, y, z) in canvas units
  Rgb skin{};
  SurfacePatch leftEye;
  SurfacePatch rightEye;
  SurfacePatch nose;
  SurfacePatch mouth;
  std::uint64_t textureSeed = 0;
  std::vector<SurfacePatch> marks;  // derived from textureSeed

  /// Every numeric field in a fixed order.
  std::vector<double> as_vector() const {
    std::vector<double> v(headAxes.begin(), headAxes.end());
    v.insert(v.end(), skin.begin(), skin.end());
    auto add = [&](const SurfacePatch& p) {
      v.insert(v.end(), p.position.begin(), p.position.end());
      v.push_back(p.sigmaX);
      v.push_back(p.sigmaY);
      v.insert(v.end(), p.color.begin(), p.color.end());
      v.push_back(p.strength);
    };
    add(leftEye);
    add(rightEye);
    add(nose);
    add(mouth);
    v.push_back(static_cast<double>(textureSeed));
    for (const SurfacePatch& m : marks) add(m);
    return v;
  }

  friend bool operator==(const IdentityParams&, const IdentityParams&) = default;
};

/// Pose, jitter and noise magnitudes used when rendering.
struct RenderSettings {
  double yawDegrees = 30.0;
  double pitchDegrees = 20.0;
  double jitterDegrees = 2.0;
  double jitterPixels = 1.0;
  double noiseSigma = 0.02;
  double background = 0.45;
};

inline constexpr std::size_t kTextureMarks = 8;
inline constexpr double kPixelsPerUnit = 24.0;

namespace detail {

inline double radians(double deg) { return deg * std::numbers::pi / 180.0; }

/// Height of the ellipsoid front surface above (x, y), 0 outside.
inline double surface_depth(const Vec3& axes, double x, double y) {
  const double r = 1.0 - (x / axes[0]) * (x / axes[0]) - (y / axes[1]) * (y / axes[1]);
  return r > 0.0 ? axes[2] * std::sqrt(r) : 0.0;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

/// Head-to-camera rotation: roll about z, then pitch about x, then yaw about y.
inline Mat3 head_rotation(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rx{{{1, 0, 0}, {0, cp, -sp}, {0, sp, cp}}};
  const Mat3 rz{{{cr, -sr, 0}, {sr, cr, 0}, {0, 0, 1}}};
  return multiply(ry, multiply(rx, rz));
}

inline Vec3 random_surface_point(const Vec3& axes, std::mt19937_64& rng) {
  // Uniform direction restricted to the front and sides (z >= -0.3).
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 d{};
  do {
    d = {n(rng), n(rng), n(rng)};
    const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (double& c : d) c /= len;
  } while (d[2] < -0.3);
  // Scale the direction onto the ellipsoid, then pull slightly inward.
  double q = 0.0;
  for (int i = 0; i < 3; ++i) q += (d[i] / axes[i]) * (d[i] / axes[i]);
  const double t = 0.97 / std::sqrt(q);
  return {d[0] * t, d[1] * t, d[2] * t};
}

inline Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace detail

/// Deterministic identity for (datasetSeed, index).
inline IdentityParams generate_identity(std::uint64_t datasetSeed, std::size_t index) {
  auto rng = make_rng(datasetSeed, {0x1d, index});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  IdentityParams id;
  id.headAxes = {in(0.78, 0.90), in(0.98, 1.08), in(0.78, 0.92)};
  const double tone = in(0.45, 0.85);
  id.skin = {tone, tone * in(0.75, 0.9), tone * in(0.6, 0.8)};

  auto front = [&](double x, double y, double inset) -> Vec3 {
    return {x, y, detail::surface_depth(id.headAxes, x, y) * inset};
  };
  const double eyeX = in(0.22, 0.36), eyeY = in(0.12, 0.32);
  const double eyeSigma = in(0.05, 0.09);
  const Rgb eyeColor = detail::random_color(rng, 0.0, 0.5);
  id.leftEye = {front(-eyeX, eyeY, 0.97), eyeSigma, eyeSigma * in(0.6, 1.0), eyeColor, 1.0};
  id.rightEye = id.leftEye;
  id.rightEye.position[0] = eyeX;

  id.nose = {front(in(-0.03, 0.03), in(-0.15, 0.02), 0.98), in(0.05, 0.10),
             in(0.10, 0.20), detail::random_color(rng, 0.3, 0.7), in(0.5, 0.9)};
  id.mouth = {front(0.0, in(-0.55, -0.35), 0.97), in(0.12, 0.25), in(0.04, 0.08),
              detail::random_color(rng, 0.2, 0.8), 1.0};

  id.textureSeed = derive_seed(datasetSeed, {0x7e, index});
  std::mt19937_64 tex(id.textureSeed);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  for (std::size_t i = 0; i < kTextureMarks; ++i) {
    SurfacePatch m;
    m.position = detail::random_surface_point(id.headAxes, tex);
    m.sigmaX = 0.06 + 0.10 * ut(tex);
    m.sigmaY = 0.06 + 0.10 * ut(tex);
    m.color = detail::random_color(tex, 0.0, 1.0);
    m.strength = 0.6 + 0.4 * ut(tex);
    id.marks.push_back(m);
  }
  return id;
}

/// Renders one view. Per-instance jitter (rotation, sub-pixel shift) and
/// pixel noise derive from `instanceSeed` alone.
inline Tensor render_view(const IdentityParams& id, ViewLabel view,
                          std::uint64_t instanceSeed,
                          const RenderSettings& settings = {}) {
  std::mt19937_64 rng(instanceSeed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double yaw = 0.0, pitch = 0.0;
  switch (view) {
    case ViewLabel::Left: yaw = -settings.yawDegrees; break;
    case ViewLabel::Right: yaw = settings.yawDegrees; break;
    case ViewLabel::Up: pitch = settings.pitchDegrees; break;
    case ViewLabel::Down: pitch = -settings.pitchDegrees; break;
    case ViewLabel::Center: break;
  }
  yaw += settings.jitterDegrees * unit(rng);
  pitch += settings.jitterDegrees * unit(rng);
  const double roll = settings.jitterDegrees * unit(rng);
  const double shiftX = settings.jitterPixels * unit(rng);
  const double shiftY = settings.jitterPixels * unit(rng);

  const detail::Mat3 rot = detail::head_rotation(
      detail::radians(yaw), detail::radians(pitch), detail::radians(roll));
  const Vec3& ax = id.headAxes;
  // Ray direction (camera z) and per-pixel origins expressed in the head
  // frame via the transpose of `rot`.
  const Vec3 dir{rot[2][0], rot[2][1], rot[2][2]};
  const double qa = (dir[0] / ax[0]) * (dir[0] / ax[0]) +
                    (dir[1] / ax[1]) * (dir[1] / ax[1]) +
                    (dir[2] / ax[2]) * (dir[2] / ax[2]);

  std::vector<const SurfacePatch*> patches{&id.leftEye, &id.rightEye, &id.nose,
                                           &id.mouth};
  for (const SurfacePatch& m : id.marks) patches.push_back(&m);

  std::normal_distribution<double> noise(0.0, settings.noiseSigma);
  Tensor img(image_shape());
  const double cx = (kImageWidth - 1) / 2.0, cy = (kImageHeight - 1) / 2.0;
  for (std::size_t r = 0; r < kImageHeight; ++r) {
    for (std::size_t c = 0; c < kImageWidth; ++c) {
      const double uu = (static_cast<double>(c) - cx - shiftX) / kPixelsPerUnit;
      const double vv = (cy - static_cast<double>(r) - shiftY) / kPixelsPerUnit;
      const Vec3 o{rot[0][0] * uu + rot[1][0] * vv, rot[0][1] * uu + rot[1][1] * vv,
                   rot[0][2] * uu + rot[1][2] * vv};
      double qb = 0.0, qc = -1.0;
      for (int i = 0; i < 3; ++i) {
        qb += 2.0 * o[i] * dir[i] / (ax[i] * ax[i]);
        qc += (o[i] / ax[i]) * (o[i] / ax[i]);
      }
      const double disc = qb * qb - 4.0 * qa * qc;
      Rgb px{settings.background, settings.background, settings.background};
      if (disc >= 0.0) {
        const double t = (-qb + std::sqrt(disc)) / (2.0 * qa);
        const Vec3 p{o[0] + t * dir[0], o[1] + t * dir[1], o[2] + t * dir[2]};
        Rgb col = id.skin;
        for (const SurfacePatch* s : patches) {
          const double dx = (p[0] - s->position[0]) / s->sigmaX;
          const double dy = (p[1] - s->position[1]) / s->sigmaY;
          const double dz = (p[2] - s->position[2]) / std::min(s->sigmaX, s->sigmaY);
          const double w = s->strength * std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
          for (int k = 0; k < 3; ++k) col[k] = col[k] * (1.0 - w) + s->color[k] * w;
        }
        // Lambertian shading with the light at the camera.
        Vec3 n{p[0] / (ax[0] * ax[0]), p[1] / (ax[1] * ax[1]), p[2] / (ax[2] * ax[2])};
        const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        const double facing =
            std::max(0.0, (rot[2][0] * n[0] + rot[2][1] * n[1] + rot[2][2] * n[2]) / len);
        const double shade = 0.35 + 0.65 * facing;
        for (int k = 0; k < 3; ++k) px[k] = col[k] * shade;
      }
      for (int k = 0; k < 3; ++k)
        img.at(r, c, static_cast<std::size_t>(k)) =
            std::clamp(px[k] + noise(rng), 0.0, 1.0);
    }
  }
  return img;
}

/// Horizontal flip (column reversal).
inline Tensor mirror(const Tensor& image) {
  if (image.rank() != 3)
    throw std::invalid_argument("mirror: expected rank-3 image, got " +
                                to_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = image.at(y, w - 1 - x, c);
  return out;
}

struct AffineParams {
  double rotationDegrees = 0.0;
  double translateX = 0.0;  // pixels
  double translateY = 0.0;
  double scale = 1.0;
};

/// Rotation within +-5 degrees, translation within +-2 px, scale 0.95-1.05.
inline AffineParams random_affine(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AffineParams a;
  a.rotationDegrees = 5.0 * u(rng);
  a.translateX = 2.0 * u(rng);
  a.translateY = 2.0 * u(rng);
  a.scale = 1.0 + 0.05 * u(rng);
  return a;
}

/// Similarity warp about the image centre with bilinear sampling; samples
/// falling outside the source take the nearest edge pixel.
inline Tensor affine_transform(const Tensor& image, const AffineParams& a) {
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  const double cx = (static_cast<double>(w) - 1) / 2.0;
  const double cy = (static_cast<double>(h) - 1) / 2.0;
  const double th = detail::radians(a.rotationDegrees);
  const double cs = std::cos(th), sn = std::sin(th);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: output -> source.
      const double ox = static_cast<double>(x) - cx - a.translateX;
      const double oy = static_cast<double>(y) - cy - a.translateY;
      double sx = (cs * ox + sn * oy) / a.scale + cx;
      double sy = (-sn * ox + cs * oy) / a.scale + cy;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = image.at(y0, x0, c) * (1 - fx) + image.at(y0, x1, c) * fx;
        const double bot = image.at(y1, x0, c) * (1 - fx) + image.at(y1, x1, c) * fx;
        out.at(y, x, c) = std::clamp(top * (1 - fy) + bot * fy, 0.0, 1.0);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { Train, Valid, Test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

/// Instance 4 is test, instance 3 validation, the rest training.
inline Split split_for_instance(std::size_t instance) {
  if (instance == 4) return Split::Test;
  if (instance == 3) return Split::Valid;
  return Split::Train;
}

/// Raw acquisition counts per view (L, C, R, U, D).
inline std::size_t raw_instances(ViewLabel v) {
  return v == ViewLabel::Center ? 5 : 2;
}

inline constexpr std::size_t kAugmentedInstances = 5;
inline constexpr std::size_t kRawImagesPerIdentity = 13;

struct ImageRecord {
  std::size_t identity = 0;
  ViewLabel view = ViewLabel::Center;
  std::size_t instance = 0;
  Split split = Split::Train;
  Tensor image;
};

struct MultiViewDataset {
  std::uint64_t seed = 0;
  std::size_t numIdentities = 0;
  std::vector<IdentityParams> identities;  // empty when loaded from disk
  std::vector<ImageRecord> images;         // sorted by (identity, view, instance)
  bool augmented = false;
};

inline std::uint64_t instance_seed(std::uint64_t datasetSeed, std::size_t identity,
                                   ViewLabel view, std::size_t instance) {
  return derive_seed(datasetSeed, {0x12, identity, view_index(view), instance});
}

/// 13 images per identity: 2 L, 5 C, 2 R, 2 U, 2 D.
inline MultiViewDataset build_dataset(std::size_t numIdentities, std::uint64_t seed,
                                      const RenderSettings& settings = {}) {
  if (numIdentities < 2)
    throw std::invalid_argument("build_dataset: need at least 2 identities");
  MultiViewDataset ds;
  ds.seed = seed;
  ds.numIdentities = numIdentities;
  ds.identities.reserve(numIdentities);
  ds.images.reserve(numIdentities * kRawImagesPerIdentity);
  for (std::size_t id = 0; id < numIdentities; ++id) {
    ds.identities.push_back(generate_identity(seed, id));
    for (ViewLabel v : kAllViews) {
      for (std::size_t k = 0; k < raw_instances(v); ++k) {
        ds.images.push_back({id, v, k, split_for_instance(k),
                             render_view(ds.identities.back(), v,
                                         instance_seed(seed, id, v, k), settings)});
      }
    }
  }
  return ds;
}

/// Brings every (identity, view) to exactly five images: originals first,
/// then horizontal mirrors (of the opposite side for L/R, of the same view
/// otherwise), then seeded affine copies of the originals.
inline MultiViewDataset augment(const MultiViewDataset& raw) {
  if (raw.augmented) throw std::invalid_argument("augment: dataset already augmented");
  std::map<std::tuple<std::size_t, ViewLabel>, std::vector<const ImageRecord*>> byKey;
  for (const ImageRecord& r : raw.images) byKey[{r.identity, r.view}].push_back(&r);

  MultiViewDataset out;
  out.seed = raw.seed;
  out.numIdentities = raw.numIdentities;
  out.identities = raw.identities;
  out.augmented = true;
  out.images.reserve(raw.numIdentities * kAllViews.size() * kAugmentedInstances);
  auto originals = [&](std::size_t id, ViewLabel v) -> const std::vector<const ImageRecord*>& {
    static const std::vector<const ImageRecord*> none;
    auto it = byKey.find({id, v});
    return it == byKey.end() ? none : it->second;
  };
  for (std::size_t id = 0; id < raw.numIdentities; ++id) {
    for (ViewLabel v : kAllViews) {
      std::vector<Tensor> slots;
      const auto& own = originals(id, v);
      for (const ImageRecord* r : own) {
        if (slots.size() == kAugmentedInstances) break;
        slots.push_back(r->image);
      }
      const ViewLabel mirrorSource = v == ViewLabel::Left    ? ViewLabel::Right
                                     : v == ViewLabel::Right ? ViewLabel::Left
                                                             : v;
      for (const ImageRecord* r : originals(id, mirrorSource)) {
        if (slots.size() == kAugmentedInstances) break;
        slots.push_back(mirror(r->image));
      }
      if (own.empty() && slots.size() < kAugmentedInstances)
        throw std::invalid_argument("augment: identity " + std::to_string(id) +
                                    " has no '" + view_name(v) + "' images");
      for (std::size_t j = 0; slots.size() < kAugmentedInstances; ++j) {
        const ImageRecord* src = own[j % own.size()];
        const auto a = random_affine(
            derive_seed(raw.seed, {0xaf, id, view_index(v), slots.size()}));
        slots.push_back(affine_transform(src->image, a));
      }
      for (std::size_t k = 0; k < slots.size(); ++k)
        out.images.push_back({id, v, k, split_for_instance(k), std::move(slots[k])});
    }
  }
  return out;
}

inline MultiViewDataset select_subviews(const MultiViewDataset& ds,
                                        const std::vector<ViewLabel>& views) {
  if (views.empty()) throw std::invalid_argument("select_subviews: empty view set");
  MultiViewDataset out;
  out.seed = ds.seed;
  out.numIdentities = ds.numIdentities;
  out.identities = ds.identities;
  out.augmented = ds.augmented;
  for (const ImageRecord& r : ds.images)
    if (std::find(views.begin(), views.end(), r.view) != views.end())
      out.images.push_back(r);
  return out;
}

/// One multi-view training example: images ordered as the model's views.
struct Sample {
  std::vector<Tensor> images;
  std::size_t label = 0;
  Split split = Split::Train;
};

/// For every identity and k = 0..4, the tuple of instance k of each view.
inline std::vector<Sample> assemble_samples(const MultiViewDataset& ds,
                                            const std::vector<ViewLabel>& viewOrder) {
  if (viewOrder.empty()) throw std::invalid_argument("assemble_samples: no views");
  std::map<std::tuple<std::size_t, ViewLabel, std::size_t>, const ImageRecord*> index;
  for (const ImageRecord& r : ds.images) index[{r.identity, r.view, r.instance}] = &r;

  std::vector<Sample> samples;
  samples.reserve(ds.numIdentities * kAugmentedInstances);
  for (std::size_t id = 0; id < ds.numIdentities; ++id) {
    for (std::size_t k = 0; k < kAugmentedInstances; ++k) {
      Sample s;
      s.label = id;
      s.split = split_for_instance(k);
      for (ViewLabel v : viewOrder) {
        auto it = index.find({id, v, k});
        if (it == index.end())
          throw std::invalid_argument("assemble_samples: identity " + std::to_string(id) +
                                      " has no instance " + std::to_string(k) +
                                      " of view '" + view_name(v) + "'");
        s.images.push_back(it->second->image);
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

/// Single-view samples from the centre component of multi-view samples.
inline std::vector<Sample> center_samples(const std::vector<Sample>& samples,
                                          const std::vector<ViewLabel>& viewOrder) {
  auto it = std::find(viewOrder.begin(), viewOrder.end(), ViewLabel::Center);
  if (it == viewOrder.end())
    throw std::invalid_argument("center_samples: view order " + views_string(viewOrder) +
                                " has no centre view");
  const auto pos = static_cast<std::size_t>(it - viewOrder.begin());
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back({{s.images.at(pos)}, s.label, s.split});
  return out;
}

inline std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split) {
  std::vector<Sample> out;
  for (const Sample& s : samples)
    if (s.split == split) out.push_back(s);
  return out;
}

}  // namespace mvdeepid
