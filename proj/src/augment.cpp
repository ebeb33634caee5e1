#include "ctiunet/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "ctiunet/errors.hpp"

namespace ctiunet {
namespace {

constexpr std::array<std::pair<TransformKind, std::string_view>, 10> kNames{{
    {TransformKind::kRotate90, "rotate90"},
    {TransformKind::kZoom, "zoom"},
    {TransformKind::kAxisFlip, "axis_flip"},
    {TransformKind::kAffine, "affine"},
    {TransformKind::kGridDistortion, "grid_distortion"},
    {TransformKind::kGaussianNoise, "gaussian_noise"},
    {TransformKind::kAdjustContrast, "adjust_contrast"},
    {TransformKind::kShiftIntensity, "shift_intensity"},
    {TransformKind::kHistogramShift, "histogram_shift"},
    {TransformKind::kGaussianSmooth, "gaussian_smooth"},
}};

// Mirror without repeating the edge sample: -1 -> 1, n -> n - 2.
long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

double reflect_coord(double v, double n) {
  if (n <= 1.0) return 0.0;
  const double period = 2.0 * (n - 1.0);
  v = std::fmod(v, period);
  if (v < 0.0) v += period;
  return v <= n - 1.0 ? v : period - v;
}

using InverseMap = std::function<void(double y, double x, double& sy, double& sx)>;

// Resamples both members through the same output->source map: bilinear for
// the image, nearest for the mask (re-binarized at 0.5).
ImagePair warp(const ImagePair& pair, const InverseMap& map) {
  const Shape s = pair.image.shape();
  const double hd = static_cast<double>(s.h);
  const double wd = static_cast<double>(s.w);
  ImagePair out{Tensor4(s), Tensor4(pair.mask.shape())};
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      double sy = 0.0, sx = 0.0;
      map(static_cast<double>(y), static_cast<double>(x), sy, sx);
      sy = reflect_coord(sy, hd);
      sx = reflect_coord(sx, wd);
      const long y0 = static_cast<long>(std::floor(sy));
      const long x0 = static_cast<long>(std::floor(sx));
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      const long h = static_cast<long>(s.h);
      const long w = static_cast<long>(s.w);
      const auto ya = static_cast<std::size_t>(reflect_index(y0, h));
      const auto yb = static_cast<std::size_t>(reflect_index(y0 + 1, h));
      const auto xa = static_cast<std::size_t>(reflect_index(x0, w));
      const auto xb = static_cast<std::size_t>(reflect_index(x0 + 1, w));
      for (std::size_t c = 0; c < s.c; ++c) {
        const Tensor4& im = pair.image;
        out.image.at(0, c, y, x) =
            (1.0 - fy) * ((1.0 - fx) * im.at(0, c, ya, xa) + fx * im.at(0, c, ya, xb)) +
            fy * ((1.0 - fx) * im.at(0, c, yb, xa) + fx * im.at(0, c, yb, xb));
      }
      const auto ny = static_cast<std::size_t>(
          reflect_index(static_cast<long>(std::lround(sy)), h));
      const auto nx = static_cast<std::size_t>(
          reflect_index(static_cast<long>(std::lround(sx)), w));
      out.mask.at(0, 0, y, x) = pair.mask.at(0, 0, ny, nx) >= 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

// Exact index permutation applied to every plane of a tensor.
Tensor4 permute(const Tensor4& t, std::size_t out_h, std::size_t out_w,
                const std::function<std::pair<std::size_t, std::size_t>(
                    std::size_t, std::size_t)>& source) {
  const Shape s = t.shape();
  Tensor4 out({s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          const auto [sy, sx] = source(y, x);
          out.at(n, c, y, x) = t.at(n, c, sy, sx);
        }
  return out;
}

void check_pair(const ImagePair& pair) {
  const Shape i = pair.image.shape();
  const Shape m = pair.mask.shape();
  if (i.n != 1 || m.n != 1 || m.c != 1 || i.h != m.h || i.w != m.w) {
    throw ConfigError("augmentation expects image (1,C,H,W) and mask "
                      "(1,1,H,W), got " + i.str() + " and " + m.str());
  }
}

std::pair<double, double> intensity_range(const Tensor4& image) {
  double lo = 0.0, hi = 1.0;
  for (double v : image.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

}  // namespace

std::string_view transform_name(TransformKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<TransformKind> transform_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  return std::nullopt;
}

bool is_geometric(TransformKind kind) {
  switch (kind) {
    case TransformKind::kRotate90:
    case TransformKind::kZoom:
    case TransformKind::kAxisFlip:
    case TransformKind::kAffine:
    case TransformKind::kGridDistortion:
      return true;
    default:
      return false;
  }
}

double TransformEntry::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) {
    throw ConfigError("transform " + std::string(transform_name(kind)) +
                      " has no parameter '" + key + "'");
  }
  return it->second;
}

AugmentSpec AugmentSpec::defaults() {
  AugmentSpec spec;
  spec.transforms = {
      {TransformKind::kRotate90, 0.5, {}},
      {TransformKind::kZoom, 0.5, {{"min_zoom", 0.9}, {"max_zoom", 1.1}}},
      {TransformKind::kAxisFlip, 0.5, {}},
      {TransformKind::kAffine, 0.5, {{"rotate", 0.1}, {"scale", 0.1}, {"shear", 0.1}}},
      {TransformKind::kGridDistortion, 0.5, {{"distort_limit", 0.03}, {"num_cells", 5}}},
      {TransformKind::kGaussianNoise, 0.2, {{"mean", 0.0}, {"std", 0.1}}},
      {TransformKind::kAdjustContrast, 0.5, {{"gamma_min", 0.7}, {"gamma_max", 1.5}}},
      {TransformKind::kShiftIntensity, 0.5, {{"offset_min", 0.1}, {"offset_max", 0.2}}},
      {TransformKind::kHistogramShift, 0.5, {{"num_control_points", 3}, {"perturbation", 0.1}}},
      {TransformKind::kGaussianSmooth, 0.5, {{"sigma_min", 0.5}, {"sigma_max", 1.0}}},
  };
  return spec;
}

AugmentSpec AugmentSpec::with_probability(double p) {
  AugmentSpec spec = defaults();
  for (auto& t : spec.transforms) t.probability = p;
  return spec;
}

TransformEntry& AugmentSpec::entry(TransformKind kind) {
  for (auto& t : transforms)
    if (t.kind == kind) return t;
  throw ConfigError("augment spec has no " + std::string(transform_name(kind)));
}

const TransformEntry& AugmentSpec::entry(TransformKind kind) const {
  return const_cast<AugmentSpec*>(this)->entry(kind);
}

void AugmentSpec::validate() const {
  for (const auto& t : transforms) {
    if (!(t.probability >= 0.0 && t.probability <= 1.0)) {
      throw ConfigError("probability of " + std::string(transform_name(t.kind)) +
                        " must lie in [0, 1]");
    }
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t sample,
                          std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(sample),
                    static_cast<std::uint32_t>(sample >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

AugmentedPair apply_pipeline(const ImagePair& pair, const AugmentSpec& spec,
                             std::uint64_t sample_index, std::uint64_t epoch) {
  check_pair(pair);
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.master_seed, sample_index, epoch));
  AugmentedPair out{pair, {}};
  ImagePair& cur = out.pair;

  for (const TransformEntry& t : spec.transforms) {
    const double coin = uniform(rng, 0.0, 1.0);
    if (!(coin < t.probability)) continue;
    AppliedTransform applied{t.kind, {}};
    auto& d = applied.draws;
    switch (t.kind) {
      case TransformKind::kRotate90: {
        const int k = std::uniform_int_distribution<int>(1, 3)(rng);
        d["k"] = k;
        cur = rotate90(cur, k);
        break;
      }
      case TransformKind::kZoom: {
        const double f = uniform(rng, t.param("min_zoom"), t.param("max_zoom"));
        d["factor"] = f;
        cur = zoom(cur, f);
        break;
      }
      case TransformKind::kAxisFlip: {
        const int axis = std::uniform_int_distribution<int>(0, 1)(rng);
        d["axis"] = axis;
        cur = axis_flip(cur, axis);
        break;
      }
      case TransformKind::kAffine: {
        const double r = t.param("rotate");
        const double sc = t.param("scale");
        const double sh = t.param("shear");
        d["rotate"] = uniform(rng, -r, r);
        d["scale"] = 1.0 + uniform(rng, -sc, sc);
        d["shear"] = uniform(rng, -sh, sh);
        cur = affine(cur, d["rotate"], d["scale"], d["shear"]);
        break;
      }
      case TransformKind::kGridDistortion: {
        const auto cells = static_cast<std::size_t>(t.param("num_cells"));
        const double limit = t.param("distort_limit");
        const Shape s = cur.image.shape();
        const double cell_h = static_cast<double>(s.h - 1) / static_cast<double>(cells - 1);
        const double cell_w = static_cast<double>(s.w - 1) / static_cast<double>(cells - 1);
        std::vector<double> dy(cells * cells), dx(cells * cells);
        for (std::size_t i = 0; i < cells * cells; ++i) {
          dy[i] = uniform(rng, -limit, limit) * cell_h;
          dx[i] = uniform(rng, -limit, limit) * cell_w;
          d["dy" + std::to_string(i)] = dy[i];
          d["dx" + std::to_string(i)] = dx[i];
        }
        cur = grid_distortion(cur, cells, dy, dx);
        break;
      }
      case TransformKind::kGaussianNoise: {
        d["std"] = t.param("std");
        cur.image = gaussian_noise(cur.image, t.param("mean"), t.param("std"), rng);
        break;
      }
      case TransformKind::kAdjustContrast: {
        d["gamma"] = uniform(rng, t.param("gamma_min"), t.param("gamma_max"));
        cur.image = adjust_contrast(cur.image, d["gamma"]);
        break;
      }
      case TransformKind::kShiftIntensity: {
        d["offset"] = uniform(rng, t.param("offset_min"), t.param("offset_max"));
        cur.image = shift_intensity(cur.image, d["offset"]);
        break;
      }
      case TransformKind::kHistogramShift: {
        const auto targets = draw_histogram_targets(
            static_cast<std::size_t>(t.param("num_control_points")),
            t.param("perturbation"), rng);
        for (std::size_t i = 0; i < targets.size(); ++i)
          d["knot" + std::to_string(i)] = targets[i];
        cur.image = histogram_shift(cur.image, targets);
        break;
      }
      case TransformKind::kGaussianSmooth: {
        d["sigma"] = uniform(rng, t.param("sigma_min"), t.param("sigma_max"));
        cur.image = gaussian_smooth(cur.image, d["sigma"]);
        break;
      }
    }
    out.log.push_back(std::move(applied));
  }
  return out;
}

ImagePair rotate90(const ImagePair& pair, int k) {
  check_pair(pair);
  k = ((k % 4) + 4) % 4;
  ImagePair out = pair;
  for (int i = 0; i < k; ++i) {
    const Shape s = out.image.shape();
    // out[y][x] = in[x][W - 1 - y]
    auto src = [w = s.w](std::size_t y, std::size_t x) {
      return std::pair<std::size_t, std::size_t>{x, w - 1 - y};
    };
    out.image = permute(out.image, s.w, s.h, src);
    out.mask = permute(out.mask, s.w, s.h, src);
  }
  return out;
}

ImagePair axis_flip(const ImagePair& pair, int axis) {
  check_pair(pair);
  if (axis != 0 && axis != 1) {
    throw ConfigError("axis_flip axis must be 0 or 1, got " + std::to_string(axis));
  }
  const Shape s = pair.image.shape();
  auto src = [&](std::size_t y, std::size_t x) {
    return axis == 0 ? std::pair<std::size_t, std::size_t>{s.h - 1 - y, x}
                     : std::pair<std::size_t, std::size_t>{y, s.w - 1 - x};
  };
  return {permute(pair.image, s.h, s.w, src), permute(pair.mask, s.h, s.w, src)};
}

ImagePair zoom(const ImagePair& pair, double factor) {
  check_pair(pair);
  if (!(factor > 0.0)) throw ConfigError("zoom factor must be > 0");
  const Shape s = pair.image.shape();
  const double cy = (static_cast<double>(s.h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(s.w) - 1.0) / 2.0;
  return warp(pair, [=](double y, double x, double& sy, double& sx) {
    sy = cy + (y - cy) / factor;
    sx = cx + (x - cx) / factor;
  });
}

ImagePair affine(const ImagePair& pair, double rotate, double scale,
                 double shear) {
  check_pair(pair);
  if (!(scale > 0.0)) throw ConfigError("affine scale must be > 0");
  const Shape s = pair.image.shape();
  const double cy = (static_cast<double>(s.h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(s.w) - 1.0) / 2.0;
  // Forward map on (x, y) offsets from the center: R(rotate) * Shear * scale.
  const double c = std::cos(rotate);
  const double sn = std::sin(rotate);
  const double a00 = c * scale, a01 = (c * shear - sn) * scale;
  const double a10 = sn * scale, a11 = (sn * shear + c) * scale;
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det;
  const double i10 = -a10 / det, i11 = a00 / det;
  return warp(pair, [=](double y, double x, double& sy, double& sx) {
    const double ox = x - cx;
    const double oy = y - cy;
    sx = cx + i00 * ox + i01 * oy;
    sy = cy + i10 * ox + i11 * oy;
  });
}

ImagePair grid_distortion(const ImagePair& pair, std::size_t cells,
                          const std::vector<double>& dy,
                          const std::vector<double>& dx) {
  check_pair(pair);
  if (cells < 2) throw ConfigError("grid_distortion needs at least 2 cells");
  if (dy.size() != cells * cells || dx.size() != cells * cells) {
    throw ConfigError("grid_distortion needs cells*cells displacements");
  }
  const Shape s = pair.image.shape();
  const double step_y = static_cast<double>(s.h - 1) / static_cast<double>(cells - 1);
  const double step_x = static_cast<double>(s.w - 1) / static_cast<double>(cells - 1);
  auto lattice = [&](const std::vector<double>& field, double y, double x) {
    const double gy = s.h > 1 ? y / step_y : 0.0;
    const double gx = s.w > 1 ? x / step_x : 0.0;
    const auto y0 = std::min(static_cast<std::size_t>(gy), cells - 2);
    const auto x0 = std::min(static_cast<std::size_t>(gx), cells - 2);
    const double fy = gy - static_cast<double>(y0);
    const double fx = gx - static_cast<double>(x0);
    auto at = [&](std::size_t r, std::size_t q) { return field[r * cells + q]; };
    return (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
           fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  };
  return warp(pair, [&](double y, double x, double& sy, double& sx) {
    sy = y + lattice(dy, y, x);
    sx = x + lattice(dx, y, x);
  });
}

Tensor4 gaussian_noise(const Tensor4& image, double mean, double stddev,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> dist(mean, stddev);
  Tensor4 out = image;
  for (double& v : out.data()) v += dist(rng);
  return out;
}

Tensor4 adjust_contrast(const Tensor4& image, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("contrast gamma must be > 0");
  if (gamma == 1.0) return image;
  const auto [lo, hi] = intensity_range(image);
  const double range = hi - lo;
  Tensor4 out = image;
  for (double& v : out.data()) v = lo + range * std::pow((v - lo) / range, gamma);
  return out;
}

Tensor4 shift_intensity(const Tensor4& image, double offset) {
  Tensor4 out = image;
  for (double& v : out.data()) v = std::clamp(v + offset, 0.0, 1.0);
  return out;
}

double histogram_map(double x, const std::vector<double>& targets) {
  const std::size_t n = targets.size();
  if (n < 2) throw ConfigError("histogram_shift needs at least 2 control points");
  x = std::clamp(x, 0.0, 1.0);
  const double pos = x * static_cast<double>(n - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), n - 2);
  const double f = pos - static_cast<double>(i);
  return targets[i] + f * (targets[i + 1] - targets[i]);
}

std::vector<double> draw_histogram_targets(std::size_t control_points,
                                           double perturbation,
                                           std::mt19937_64& rng) {
  if (control_points < 2) {
    throw ConfigError("histogram_shift needs at least 2 control points");
  }
  std::vector<double> targets(control_points);
  for (std::size_t i = 0; i < control_points; ++i) {
    const double base = static_cast<double>(i) / static_cast<double>(control_points - 1);
    targets[i] = std::clamp(base + uniform(rng, -perturbation, perturbation), 0.0, 1.0);
  }
  for (std::size_t i = 1; i < control_points; ++i)
    targets[i] = std::max(targets[i], targets[i - 1]);
  return targets;
}

Tensor4 histogram_shift(const Tensor4& image, const std::vector<double>& targets) {
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (targets[i] < targets[i - 1]) {
      throw ConfigError("histogram_shift control targets must be non-decreasing");
    }
  }
  const auto [lo, hi] = intensity_range(image);
  const double range = hi - lo;
  Tensor4 out = image;
  for (double& v : out.data()) v = lo + range * histogram_map((v - lo) / range, targets);
  return out;
}

Tensor4 gaussian_smooth(const Tensor4& image, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("smoothing sigma must be > 0");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  const Shape s = image.shape();
  const long h = static_cast<long>(s.h);
  const long w = static_cast<long>(s.w);
  Tensor4 tmp(s), out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
          double acc = 0.0;
          for (long k = -radius; k <= radius; ++k)
            acc += kernel[static_cast<std::size_t>(k + radius)] *
                   image.at(n, c, static_cast<std::size_t>(y),
                            static_cast<std::size_t>(reflect_index(x + k, w)));
          tmp.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
        }
      for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
          double acc = 0.0;
          for (long k = -radius; k <= radius; ++k)
            acc += kernel[static_cast<std::size_t>(k + radius)] *
                   tmp.at(n, c, static_cast<std::size_t>(reflect_index(y + k, h)),
                          static_cast<std::size_t>(x));
          out.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
        }
    }
  return out;
}

}  // namespace ctiunet
