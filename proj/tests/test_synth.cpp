#include <gtest/gtest.h>

#include <map>
#include <set>

#include "mvdeepid/synth.hpp"

using namespace mvdeepid;

namespace {

double mean_l2(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

std::map<std::pair<std::size_t, ViewLabel>, std::size_t> histogram(const MultiViewDataset& ds) {
  std::map<std::pair<std::size_t, ViewLabel>, std::size_t> h;
  for (const ImageRecord& r : ds.images) ++h[{r.identity, r.view}];
  return h;
}

/// Shared fixtures: building and augmenting is the slow part.
const MultiViewDataset& raw20() {
  static const MultiViewDataset ds = build_dataset(20, 5);
  return ds;
}

const MultiViewDataset& aug20() {
  static const MultiViewDataset ds = augment(raw20());
  return ds;
}

}  // namespace

TEST(Views, Labels) {
  EXPECT_EQ(kAllViews.size(), 5u);
  EXPECT_EQ(views_string(parse_view_group("lcr")), "LCR");
  EXPECT_EQ(views_string(parse_view_group("ucd")), "UCD");
  EXPECT_EQ(parse_view_group("all5").size(), 5u);
  EXPECT_EQ(parse_view("U"), ViewLabel::Up);
  EXPECT_THROW(parse_view("X"), std::invalid_argument);
}

TEST(Identity, DeterministicAndDistinct) {
  EXPECT_EQ(generate_identity(3, 0), generate_identity(3, 0));
  EXPECT_NE(generate_identity(3, 0).as_vector(), generate_identity(3, 1).as_vector());
  EXPECT_NE(generate_identity(3, 0).as_vector(), generate_identity(4, 0).as_vector());
}

TEST(Identity, NoDuplicatesAmong504) {
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < 504; ++i) seen.insert(generate_identity(1, i).as_vector());
  EXPECT_EQ(seen.size(), 504u);
}

TEST(Identity, LandmarksInsideHead) {
  for (std::size_t i = 0; i < 50; ++i) {
    const IdentityParams id = generate_identity(2, i);
    std::vector<const SurfacePatch*> all{&id.leftEye, &id.rightEye, &id.nose, &id.mouth};
    for (const SurfacePatch& m : id.marks) all.push_back(&m);
    for (const SurfacePatch* p : all) {
      double q = 0;
      for (int k = 0; k < 3; ++k) q += std::pow(p->position[k] / id.headAxes[k], 2);
      EXPECT_LE(q, 1.0 + 1e-9);
    }
  }
}

TEST(Render, ShapeRangeAndDeterminism) {
  const IdentityParams id = generate_identity(1, 7);
  for (ViewLabel v : kAllViews) {
    const Tensor a = render_view(id, v, 99);
    EXPECT_EQ(a.shape(), (Shape{55, 47, 3}));
    for (double x : a.data()) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
    EXPECT_EQ(a, render_view(id, v, 99));
  }
  EXPECT_NE(render_view(id, ViewLabel::Center, 1), render_view(id, ViewLabel::Center, 2));
}

TEST(Render, SymmetricIdentityCenterViewIsMirrorSymmetric) {
  IdentityParams id = generate_identity(1, 3);
  id.nose.position[0] = 0.0;
  id.mouth.position[0] = 0.0;
  id.marks.clear();
  RenderSettings still;
  still.jitterDegrees = 0;
  still.jitterPixels = 0;
  still.noiseSigma = 0;
  const Tensor clean = render_view(id, ViewLabel::Center, 1, still);
  EXPECT_LT(max_abs_diff(clean, mirror(clean)), 1e-12);

  still.noiseSigma = RenderSettings{}.noiseSigma;
  const Tensor noisy = render_view(id, ViewLabel::Center, 1, still);
  // Two independent noise draws per pixel: RMS difference ~ sqrt(2) sigma.
  EXPECT_LT(mean_l2(noisy, mirror(noisy)), 2.0 * still.noiseSigma);
}

TEST(Render, ViewChangeDominatesInstanceJitter) {
  double lr = 0, cc = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const IdentityParams id = generate_identity(11, i);
    lr += mean_l2(render_view(id, ViewLabel::Left, instance_seed(11, i, ViewLabel::Left, 0)),
                  render_view(id, ViewLabel::Right, instance_seed(11, i, ViewLabel::Right, 0)));
    cc += mean_l2(render_view(id, ViewLabel::Center, instance_seed(11, i, ViewLabel::Center, 0)),
                  render_view(id, ViewLabel::Center, instance_seed(11, i, ViewLabel::Center, 1)));
  }
  EXPECT_GT(lr, cc);
}

TEST(Dataset, RawCounts) {
  const MultiViewDataset& ds = raw20();
  EXPECT_EQ(ds.images.size(), 260u);
  for (const auto& [key, n] : histogram(ds)) EXPECT_EQ(n, raw_instances(key.second));
  EXPECT_EQ(raw_instances(ViewLabel::Left), 2u);
  EXPECT_EQ(raw_instances(ViewLabel::Center), 5u);
  EXPECT_EQ(raw_instances(ViewLabel::Right), 2u);
  EXPECT_EQ(raw_instances(ViewLabel::Up), 2u);
  EXPECT_EQ(raw_instances(ViewLabel::Down), 2u);
  EXPECT_EQ(kRawImagesPerIdentity, 13u);
  EXPECT_THROW(build_dataset(1, 1), std::invalid_argument);
}

TEST(Dataset, FullScaleImageCount) {
  const MultiViewDataset ds = build_dataset(504, 1);
  EXPECT_EQ(ds.images.size(), 6552u);
  EXPECT_EQ(ds.identities.size(), 504u);
}

TEST(Dataset, EveryIdentityInEverySplit) {
  std::map<Split, std::set<std::size_t>> ids;
  for (const ImageRecord& r : aug20().images) ids[r.split].insert(r.identity);
  for (Split s : {Split::Train, Split::Valid, Split::Test}) EXPECT_EQ(ids[s].size(), 20u);
}

TEST(Augment, CountsAndOriginalsRetained) {
  const MultiViewDataset& ds = aug20();
  EXPECT_EQ(ds.images.size(), 20u * 25u);
  for (const auto& [key, n] : histogram(ds)) EXPECT_EQ(n, 5u);
  EXPECT_EQ(histogram(ds).size(), 100u);
  // Originals keep their slots.
  for (const ImageRecord& r : raw20().images) {
    const auto it = std::find_if(ds.images.begin(), ds.images.end(), [&](const ImageRecord& a) {
      return a.identity == r.identity && a.view == r.view && a.instance == r.instance;
    });
    ASSERT_NE(it, ds.images.end());
    EXPECT_EQ(it->image, r.image);
  }
  EXPECT_THROW(augment(ds), std::invalid_argument);
}

TEST(Augment, MirrorsRelabelLeftAndRight) {
  const MultiViewDataset& raw = raw20();
  const MultiViewDataset& ds = aug20();
  auto find = [](const MultiViewDataset& d, std::size_t id, ViewLabel v, std::size_t k) {
    for (const ImageRecord& r : d.images)
      if (r.identity == id && r.view == v && r.instance == k) return r.image;
    return Tensor();
  };
  // Slots 2 and 3 of L are the mirrored R originals, and vice versa.
  EXPECT_EQ(find(ds, 4, ViewLabel::Left, 2), mirror(find(raw, 4, ViewLabel::Right, 0)));
  EXPECT_EQ(find(ds, 4, ViewLabel::Left, 3), mirror(find(raw, 4, ViewLabel::Right, 1)));
  EXPECT_EQ(find(ds, 4, ViewLabel::Right, 2), mirror(find(raw, 4, ViewLabel::Left, 0)));
  EXPECT_EQ(find(ds, 4, ViewLabel::Up, 2), mirror(find(raw, 4, ViewLabel::Up, 0)));
}

TEST(Augment, MirrorIsAnInvolution) {
  const Tensor& img = raw20().images[3].image;
  EXPECT_EQ(mirror(mirror(img)), img);
}

TEST(Augment, AffineParametersWithinBounds) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const AffineParams a = random_affine(s);
    EXPECT_LE(std::abs(a.rotationDegrees), 5.0);
    EXPECT_LE(std::abs(a.translateX), 2.0);
    EXPECT_LE(std::abs(a.translateY), 2.0);
    EXPECT_GE(a.scale, 0.95);
    EXPECT_LE(a.scale, 1.05);
  }
}

TEST(Augment, IdentityAffineIsExactAndBordersReplicate) {
  const Tensor& img = raw20().images[0].image;
  EXPECT_LT(max_abs_diff(affine_transform(img, {}), img), 1e-12);
  AffineParams shift;
  shift.translateX = 2.0;
  const Tensor out = affine_transform(img, shift);
  for (std::size_t y = 0; y < 55; ++y) {
    EXPECT_DOUBLE_EQ(out.at(y, 0, 0), img.at(y, 0, 0));
    EXPECT_DOUBLE_EQ(out.at(y, 1, 0), img.at(y, 0, 0));
    EXPECT_DOUBLE_EQ(out.at(y, 5, 1), img.at(y, 3, 1));
  }
}

TEST(SubViews, CountsAndOverlap) {
  const MultiViewDataset lcr = select_subviews(aug20(), lcr_views());
  const MultiViewDataset ucd = select_subviews(aug20(), ucd_views());
  EXPECT_EQ(lcr.images.size(), 300u);
  EXPECT_EQ(select_subviews(aug20(), all_views()).images.size(), aug20().images.size());
  std::size_t shared = 0;
  for (const ImageRecord& a : lcr.images)
    for (const ImageRecord& b : ucd.images)
      if (a.identity == b.identity && a.view == b.view && a.instance == b.instance) {
        EXPECT_EQ(a.view, ViewLabel::Center);
        ++shared;
      }
  EXPECT_EQ(shared, 100u);
  EXPECT_THROW(select_subviews(aug20(), {}), std::invalid_argument);
}

TEST(Samples, CountsAndSplits) {
  const auto samples = assemble_samples(select_subviews(aug20(), lcr_views()), lcr_views());
  EXPECT_EQ(samples.size(), 100u);
  EXPECT_EQ(filter_split(samples, Split::Train).size(), 60u);
  EXPECT_EQ(filter_split(samples, Split::Valid).size(), 20u);
  EXPECT_EQ(filter_split(samples, Split::Test).size(), 20u);
  for (const Sample& s : samples) EXPECT_EQ(s.images.size(), 3u);
}

TEST(Samples, ImagesShareTheIdentityAndSplitsAreDisjoint) {
  const MultiViewDataset& ds = aug20();
  const auto samples = assemble_samples(ds, lcr_views());
  std::set<std::tuple<std::size_t, std::size_t, Split>> keys;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const std::size_t k = i % 5;
    for (std::size_t v = 0; v < 3; ++v) {
      const ViewLabel view = lcr_views()[v];
      const auto it = std::find_if(ds.images.begin(), ds.images.end(), [&](const ImageRecord& r) {
        return r.identity == s.label && r.view == view && r.instance == k;
      });
      ASSERT_NE(it, ds.images.end());
      EXPECT_EQ(it->image, s.images[v]);
    }
    EXPECT_TRUE(keys.insert({s.label, k, s.split}).second);
    EXPECT_EQ(s.split, split_for_instance(k));
  }
}

TEST(Samples, MissingViewIsNamed) {
  try {
    assemble_samples(raw20(), lcr_views());  // raw L has only instances 0, 1
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("identity 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'L'"), std::string::npos) << msg;
  }
}

TEST(Samples, CenterComponent) {
  const auto samples = assemble_samples(aug20(), ucd_views());
  const auto centre = center_samples(samples, ucd_views());
  ASSERT_EQ(centre.size(), samples.size());
  EXPECT_EQ(centre[7].images.size(), 1u);
  EXPECT_EQ(centre[7].images[0], samples[7].images[1]);
  EXPECT_THROW(center_samples(samples, {ViewLabel::Left, ViewLabel::Right}), std::invalid_argument);
}

TEST(Pipeline, EndToEndDeterminism) {
  const MultiViewDataset again = augment(build_dataset(20, 5));
  ASSERT_EQ(again.images.size(), aug20().images.size());
  for (std::size_t i = 0; i < again.images.size(); ++i)
    EXPECT_EQ(again.images[i].image, aug20().images[i].image);
}

TEST(Pipeline, NearestCentroidBeatsChance) {
  // Centroids from training centre-view images, scored on the test instance.
  const auto samples = assemble_samples(aug20(), {ViewLabel::Center});
  std::vector<Tensor> centroid(20, Tensor(image_shape()));
  std::vector<double> count(20, 0);
  for (const Sample& s : filter_split(samples, Split::Train)) {
    centroid[s.label] += s.images[0];
    count[s.label] += 1;
  }
  for (std::size_t i = 0; i < 20; ++i) centroid[i] *= 1.0 / count[i];
  std::size_t correct = 0, total = 0;
  for (const Sample& s : filter_split(samples, Split::Test)) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 20; ++i)
      if (mean_l2(s.images[0], centroid[i]) < mean_l2(s.images[0], centroid[best])) best = i;
    correct += best == s.label;
    ++total;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(total), 1.0 / 20.0);
}
