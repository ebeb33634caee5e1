#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "ctiunet/augment.hpp"
#include "ctiunet/errors.hpp"
#include "test_util.hpp"

namespace ctiunet {
namespace {

using testing::random_mask;
using testing::random_tensor;

ImagePair random_pair(std::uint64_t seed, std::size_t h = 16, std::size_t w = 16) {
  return {random_tensor({1, 3, h, w}, seed, 0, 1), random_mask({1, 1, h, w}, seed + 1, 0.3)};
}

bool binary(const Tensor4& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0 || v == 1; });
}

double total(const Tensor4& t) {
  double s = 0;
  for (double v : t.data()) s += v;
  return s;
}

TEST(AugmentSpecTest, DefaultsFollowTheTable) {
  const AugmentSpec s = AugmentSpec::defaults();
  const TransformKind order[] = {
      TransformKind::kRotate90,       TransformKind::kZoom,           TransformKind::kAxisFlip,
      TransformKind::kAffine,         TransformKind::kGridDistortion, TransformKind::kGaussianNoise,
      TransformKind::kAdjustContrast, TransformKind::kShiftIntensity, TransformKind::kHistogramShift,
      TransformKind::kGaussianSmooth};
  ASSERT_EQ(s.transforms.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(s.transforms[i].kind, order[i]);
    EXPECT_EQ(s.transforms[i].probability,
              order[i] == TransformKind::kGaussianNoise ? 0.2 : 0.5);
  }
  EXPECT_EQ(s.entry(TransformKind::kZoom).param("min_zoom"), 0.9);
  EXPECT_EQ(s.entry(TransformKind::kZoom).param("max_zoom"), 1.1);
  EXPECT_EQ(s.entry(TransformKind::kAffine).param("rotate"), 0.1);
  EXPECT_EQ(s.entry(TransformKind::kAffine).param("scale"), 0.1);
  EXPECT_EQ(s.entry(TransformKind::kAffine).param("shear"), 0.1);
  EXPECT_EQ(s.entry(TransformKind::kGridDistortion).param("distort_limit"), 0.03);
  EXPECT_EQ(s.entry(TransformKind::kGridDistortion).param("num_cells"), 5);
  EXPECT_EQ(s.entry(TransformKind::kGaussianNoise).param("mean"), 0.0);
  EXPECT_EQ(s.entry(TransformKind::kGaussianNoise).param("std"), 0.1);
  EXPECT_EQ(s.entry(TransformKind::kAdjustContrast).param("gamma_min"), 0.7);
  EXPECT_EQ(s.entry(TransformKind::kAdjustContrast).param("gamma_max"), 1.5);
  EXPECT_EQ(s.entry(TransformKind::kShiftIntensity).param("offset_min"), 0.1);
  EXPECT_EQ(s.entry(TransformKind::kShiftIntensity).param("offset_max"), 0.2);
  EXPECT_EQ(s.entry(TransformKind::kHistogramShift).param("num_control_points"), 3);
  EXPECT_EQ(s.entry(TransformKind::kGaussianSmooth).param("sigma_min"), 0.5);
  EXPECT_EQ(s.entry(TransformKind::kGaussianSmooth).param("sigma_max"), 1.0);
}

TEST(AugmentSpecTest, RejectsBadProbability) {
  AugmentSpec s = AugmentSpec::defaults();
  s.transforms[0].probability = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(PipelineTest, ZeroProbabilityIsIdentity) {
  const ImagePair p = random_pair(1);
  const AugmentedPair out = apply_pipeline(p, AugmentSpec::with_probability(0.0), 3, 7);
  EXPECT_EQ(out.pair.image, p.image);
  EXPECT_EQ(out.pair.mask, p.mask);
  EXPECT_TRUE(out.log.empty());
}

TEST(PipelineTest, DeterministicPerSampleAndEpoch) {
  const ImagePair p = random_pair(2);
  AugmentSpec spec = AugmentSpec::with_probability(1.0);
  spec.master_seed = 9;
  const AugmentedPair a = apply_pipeline(p, spec, 4, 2);
  const AugmentedPair b = apply_pipeline(p, spec, 4, 2);
  const AugmentedPair c = apply_pipeline(p, spec, 5, 2);
  EXPECT_EQ(a.pair.image, b.pair.image);
  EXPECT_EQ(a.pair.mask, b.pair.mask);
  EXPECT_FALSE(a.pair.image == c.pair.image);
  EXPECT_EQ(a.log.size(), 10u);
  EXPECT_EQ(a.log[0].kind, TransformKind::kRotate90);
  EXPECT_TRUE(a.log[0].draws.count("k"));
}

TEST(PipelineTest, InvariantsUnderManyDraws) {
  const AugmentSpec spec = AugmentSpec::defaults();
  for (std::uint64_t s = 0; s < 40; ++s) {
    const ImagePair p = random_pair(100 + s, 16, 24);
    const AugmentedPair out = apply_pipeline(p, spec, s, s % 3);
    EXPECT_TRUE(binary(out.pair.mask));
    // Rotate90 swaps extents on non-square tiles; image and mask stay in step.
    const Shape is = out.pair.image.shape(), ms = out.pair.mask.shape();
    EXPECT_EQ(is.h, ms.h);
    EXPECT_EQ(is.w, ms.w);
    EXPECT_EQ(std::minmax(is.h, is.w), std::minmax(p.image.shape().h, p.image.shape().w));
    EXPECT_TRUE(out.pair.image.all_finite());
  }
}

TEST(PipelineTest, RotateFourTimesIsIdentity) {
  AugmentSpec spec = AugmentSpec::with_probability(0.0);
  spec.entry(TransformKind::kRotate90).probability = 1.0;
  const ImagePair p = random_pair(3);
  ImagePair cur = p;
  for (int i = 0; i < 4; ++i) cur = rotate90(cur, 1);
  EXPECT_EQ(cur.image, p.image);
  EXPECT_EQ(cur.mask, p.mask);
  // Via the pipeline, k is drawn; composing the logged rotations back to 4 restores it.
  const AugmentedPair out = apply_pipeline(p, spec, 0, 0);
  const int k = static_cast<int>(out.log.at(0).draws.at("k"));
  ImagePair back = out.pair;
  back = rotate90(back, 4 - k);
  EXPECT_EQ(back.image, p.image);
}

TEST(GeometricTest, CounterClockwiseRotation) {
  // [[a,b],[c,d]] -> [[b,d],[a,c]]
  const ImagePair p{Tensor4({1, 1, 2, 2}, {1, 2, 3, 4}), Tensor4({1, 1, 2, 2}, {1, 0, 0, 0})};
  const ImagePair r = rotate90(p, 1);
  EXPECT_EQ(r.image, Tensor4({1, 1, 2, 2}, {2, 4, 1, 3}));
  EXPECT_EQ(r.mask, Tensor4({1, 1, 2, 2}, {0, 0, 1, 0}));
}

TEST(GeometricTest, FlipsAndHalfTurn) {
  const ImagePair p = random_pair(4, 6, 6);
  for (int axis : {0, 1}) {
    const ImagePair twice = axis_flip(axis_flip(p, axis), axis);
    EXPECT_EQ(twice.image, p.image);
    EXPECT_EQ(total(axis_flip(p, axis).mask), total(p.mask));
  }
  const ImagePair half = rotate90(p, 2);
  const ImagePair both = axis_flip(axis_flip(p, 0), 1);
  EXPECT_EQ(half.image, both.image);
  EXPECT_EQ(half.mask, both.mask);
  EXPECT_EQ(total(rotate90(p, 1).mask), total(p.mask));
}

TEST(GeometricTest, IdentityParametersAreIdentity) {
  const ImagePair p = random_pair(5, 12, 12);
  const ImagePair z = zoom(p, 1.0);
  const ImagePair a = affine(p, 0.0, 1.0, 0.0);
  const ImagePair g = grid_distortion(p, 5, std::vector<double>(25, 0.0), std::vector<double>(25, 0.0));
  for (const ImagePair* q : {&z, &a, &g}) {
    EXPECT_LE(max_abs_diff(q->image, p.image), 1e-6);
    EXPECT_EQ(q->mask, p.mask);
  }
}

ImagePair disc(std::size_t size, double radius) {
  ImagePair p{Tensor4({1, 1, size, size}), Tensor4({1, 1, size, size})};
  const double c = (static_cast<double>(size) - 1) / 2;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const bool in = std::hypot(y - c, x - c) <= radius;
      p.mask.at(0, 0, y, x) = in;
      p.image.at(0, 0, y, x) = in;
    }
  return p;
}

TEST(GeometricTest, ZoomScalesDiscArea) {
  const ImagePair p = disc(128, 30);
  const ImagePair z = zoom(p, 1.1);
  EXPECT_TRUE(binary(z.mask));
  const double ratio = total(z.mask) / total(p.mask);
  EXPECT_NEAR(ratio, 1.21, 0.121);
  const ImagePair out = zoom(p, 0.9);
  EXPECT_NEAR(total(out.mask) / total(p.mask), 0.81, 0.081);
}

TEST(GeometricTest, MaskFollowsImage) {
  // Image channel equal to the mask: nearest-resampled mask must agree with the
  // image wherever bilinear interpolation lands on a clean 0 or 1.
  const ImagePair p = disc(48, 12);
  const std::vector<ImagePair> outs{zoom(p, 1.07), affine(p, 0.08, 1.05, -0.06),
                                    rotate90(p, 3), axis_flip(p, 1)};
  for (const ImagePair& q : outs)
    for (std::size_t i = 0; i < q.mask.size(); ++i) {
      if (q.image[i] > 0.99) EXPECT_EQ(q.mask[i], 1.0);
      if (q.image[i] < 0.01) EXPECT_EQ(q.mask[i], 0.0);
    }
}

TEST(GeometricTest, GridDistortionKeepsBinaryMask) {
  const ImagePair p = disc(32, 9);
  std::vector<double> dy(25), dx(25);
  for (std::size_t i = 0; i < 25; ++i) {
    dy[i] = 0.03 * 6.4 * ((i % 3) - 1.0);
    dx[i] = -0.03 * 6.4 * ((i % 2) ? 1.0 : -1.0);
  }
  const ImagePair g = grid_distortion(p, 5, dy, dx);
  EXPECT_TRUE(binary(g.mask));
  EXPECT_NEAR(total(g.mask), total(p.mask), 0.1 * total(p.mask));
}

TEST(IntensityTest, ContrastGammaOneIsIdentity) {
  const Tensor4 img = random_tensor({1, 3, 8, 8}, 6, 0, 1);
  EXPECT_EQ(adjust_contrast(img, 1.0), img);
  const Tensor4 g = adjust_contrast(img, 2.0);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(g[i], img[i] * img[i], 1e-12);
}

TEST(IntensityTest, ShiftClamps) {
  const Tensor4 img({1, 1, 1, 3}, {0.0, 0.5, 0.95});
  const Tensor4 s = shift_intensity(img, 0.1);
  EXPECT_NEAR(s[0], 0.1, 1e-15);
  EXPECT_NEAR(s[1], 0.6, 1e-15);
  EXPECT_EQ(s[2], 1.0);
}

TEST(IntensityTest, SmoothPreservesConstant) {
  const Tensor4 img({1, 3, 9, 7}, 0.37);
  for (double sigma : {0.5, 0.75, 1.0}) {
    const Tensor4 s = gaussian_smooth(img, sigma);
    for (double v : s.data()) EXPECT_NEAR(v, 0.37, 1e-12);
  }
}

TEST(IntensityTest, NoiseStatistics) {
  std::mt19937_64 rng(7);
  const Tensor4 img({1, 1, 1000, 1000}, 0.0);
  const Tensor4 n = gaussian_noise(img, 0.0, 0.1, rng);
  double m = 0, v = 0;
  for (double x : n.data()) m += x;
  m /= 1e6;
  for (double x : n.data()) v += (x - m) * (x - m);
  EXPECT_NEAR(std::sqrt(v / 1e6), 0.1, 0.002);
  EXPECT_NEAR(m, 0.0, 0.001);
}

TEST(IntensityTest, HistogramMapMonotone) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 500; ++k) {
    const auto targets = draw_histogram_targets(3, 0.1, rng);
    double prev = -1e9;
    for (int i = 0; i <= 1000; ++i) {
      const double y = histogram_map(i / 1000.0, targets);
      EXPECT_GE(y, prev);
      prev = y;
    }
  }
}

TEST(IntensityTest, IntensityTransformsLeaveMaskAlone) {
  AugmentSpec spec = AugmentSpec::with_probability(0.0);
  for (auto& t : spec.transforms)
    if (!is_geometric(t.kind)) t.probability = 1.0;
  const ImagePair p = random_pair(9);
  const AugmentedPair out = apply_pipeline(p, spec, 1, 1);
  EXPECT_EQ(out.pair.mask, p.mask);
  EXPECT_FALSE(out.pair.image == p.image);
  EXPECT_EQ(out.log.size(), 5u);
}

TEST(TransformNameTest, RoundTrip) {
  for (const auto& t : AugmentSpec::defaults().transforms)
    EXPECT_EQ(transform_from_name(transform_name(t.kind)), t.kind);
  EXPECT_FALSE(transform_from_name("nope").has_value());
}

}  // namespace
}  // namespace ctiunet
