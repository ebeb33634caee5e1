#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ctiunet/tensor.hpp"

namespace ctiunet {

// In application order.
enum class TransformKind {
  kRotate90,
  kZoom,
  kAxisFlip,
  kAffine,
  kGridDistortion,
  kGaussianNoise,
  kAdjustContrast,
  kShiftIntensity,
  kHistogramShift,
  kGaussianSmooth,
};

std::string_view transform_name(TransformKind kind);
std::optional<TransformKind> transform_from_name(std::string_view name);
bool is_geometric(TransformKind kind);

struct TransformEntry {
  TransformKind kind;
  double probability = 0.5;
  std::map<std::string, double> params;

  double param(const std::string& key) const;
};

struct AugmentSpec {
  std::vector<TransformEntry> transforms;
  std::uint64_t master_seed = 0;

  // The ten stock transforms with their default parameters and
  // probabilities.
  static AugmentSpec defaults();
  // Same transforms with every probability forced to `p`.
  static AugmentSpec with_probability(double p);

  TransformEntry& entry(TransformKind kind);
  const TransformEntry& entry(TransformKind kind) const;
  void validate() const;
};

// image (1, C, H, W), mask (1, 1, H, W) with values in {0, 1}.
struct ImagePair {
  Tensor4 image;
  Tensor4 mask;
};

struct AppliedTransform {
  TransformKind kind;
  std::map<std::string, double> draws;
};

struct AugmentedPair {
  ImagePair pair;
  std::vector<AppliedTransform> log;
};

// Per-sample generator seed, a pure function of its three inputs.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t sample,
                          std::uint64_t epoch);

// Applies each transform of `spec` in order, each independently with its
// probability. Geometric maps are shared by image and mask; intensity
// transforms touch the image only.
AugmentedPair apply_pipeline(const ImagePair& pair, const AugmentSpec& spec,
                             std::uint64_t sample_index, std::uint64_t epoch);

// --- geometric ------------------------------------------------------------

// k counter-clockwise quarter turns.
ImagePair rotate90(const ImagePair& pair, int k);
// axis 0 reverses rows, axis 1 reverses columns.
ImagePair axis_flip(const ImagePair& pair, int axis);
// factor > 1 magnifies about the center.
ImagePair zoom(const ImagePair& pair, double factor);
// rotate and shear in radians; scale is the multiplicative factor.
ImagePair affine(const ImagePair& pair, double rotate, double scale,
                 double shear);
// Displacements (in pixels) of a cells x cells lattice spanning the image,
// row-major; dy and dx each hold cells * cells values.
ImagePair grid_distortion(const ImagePair& pair, std::size_t cells,
                          const std::vector<double>& dy,
                          const std::vector<double>& dx);

// --- intensity ------------------------------------------------------------

Tensor4 gaussian_noise(const Tensor4& image, double mean, double stddev,
                       std::mt19937_64& rng);
Tensor4 adjust_contrast(const Tensor4& image, double gamma);
Tensor4 shift_intensity(const Tensor4& image, double offset);
// Piecewise-linear map through knots at evenly spaced positions of the
// intensity range; `targets` gives the knot outputs as fractions of that
// range and must be non-decreasing.
Tensor4 histogram_shift(const Tensor4& image, const std::vector<double>& targets);
double histogram_map(double x, const std::vector<double>& targets);
// Perturbs evenly spaced knots by U(-perturbation, perturbation), clamps to
// [0, 1] and repairs monotonicity.
std::vector<double> draw_histogram_targets(std::size_t control_points,
                                           double perturbation,
                                           std::mt19937_64& rng);
Tensor4 gaussian_smooth(const Tensor4& image, double sigma);

}  // namespace ctiunet
