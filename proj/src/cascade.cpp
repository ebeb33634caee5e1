#include "ctiunet/cascade.hpp"

#include <algorithm>
#include <cmath>

#include "ctiunet/data.hpp"
#include "ctiunet/errors.hpp"
#include "ctiunet/image_io.hpp"

namespace ctiunet {

void ThresholdSet::validate() const {
  if (values.empty()) throw ConfigError("threshold set must be non-empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0 && values[i] < 1.0)) {
      throw ConfigError("thresholds must lie in (0, 1), got " +
                        std::to_string(values[i]));
    }
    if (i > 0 && !(values[i] > values[i - 1])) {
      throw ConfigError("thresholds must be strictly ascending");
    }
  }
}

Tensor4 binarize_multi(const Tensor4& probs, const ThresholdSet& thresholds) {
  thresholds.validate();
  const Shape s = probs.shape();
  if (s.c != 1) throw ConfigError("binarize_multi expects 1 channel, got " + s.str());
  Tensor4 out({s.n, thresholds.size(), s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    auto p = probs.plane(n, 0);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      auto o = out.plane(n, t);
      const double th = thresholds.values[t];
      for (std::size_t i = 0; i < p.size(); ++i) o[i] = p[i] >= th ? 1.0 : 0.0;
    }
  }
  return out;
}

void check_cascade_channels(std::size_t model1_in, std::size_t model2_in,
                            const ThresholdSet& thresholds) {
  if (model1_in != 3) {
    throw ConfigError("initial network must take 3 input channels, has " +
                      std::to_string(model1_in));
  }
  if (model2_in != thresholds.size() + 1) {
    throw ConfigError("refinement network takes " + std::to_string(model2_in) +
                      " input channels but " + std::to_string(thresholds.size()) +
                      " thresholds produce " + std::to_string(thresholds.size() + 1));
  }
}

Tensor4 assemble_model2_input(const Tensor4& gray, const Tensor4& stack,
                              std::size_t model2_in_channels) {
  const Shape g = gray.shape();
  const Shape s = stack.shape();
  if (g.c != 1) throw ConfigError("gray input must have 1 channel, got " + g.str());
  if (g.n != s.n || g.h != s.h || g.w != s.w) {
    throw ConfigError("gray " + g.str() + " and mask stack " + s.str() +
                      " extents differ");
  }
  if (s.c + 1 != model2_in_channels) {
    throw ConfigError("refinement network takes " +
                      std::to_string(model2_in_channels) + " input channels but " +
                      std::to_string(s.c) + " thresholds produce " +
                      std::to_string(s.c + 1));
  }
  Tensor4 out({g.n, s.c + 1, g.h, g.w});
  for (std::size_t n = 0; n < g.n; ++n) {
    std::copy(gray.plane(n, 0).begin(), gray.plane(n, 0).end(), out.plane(n, 0).begin());
    for (std::size_t c = 0; c < s.c; ++c)
      std::copy(stack.plane(n, c).begin(), stack.plane(n, c).end(),
                out.plane(n, c + 1).begin());
  }
  return out;
}

std::size_t WindowSpec::stride() const {
  const auto s = static_cast<long>(std::lround(static_cast<double>(window) * (1.0 - overlap)));
  return static_cast<std::size_t>(std::max(1L, s));
}

void WindowSpec::validate() const {
  if (window == 0) throw ConfigError("window size must be > 0");
  if (!(overlap >= 0.0 && overlap < 1.0)) {
    throw ConfigError("window overlap must lie in [0, 1)");
  }
}

std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window,
                                        std::size_t stride) {
  if (window > extent) {
    throw ConfigError("window " + std::to_string(window) +
                      " is larger than image extent " + std::to_string(extent));
  }
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos + window < extent) {
    out.push_back(pos);
    pos += stride;
  }
  const std::size_t last = extent - window;
  if (out.empty() || out.back() != last) out.push_back(last);
  return out;
}

std::vector<WindowOrigin> window_grid(std::size_t height, std::size_t width,
                                      const WindowSpec& spec) {
  spec.validate();
  const auto ys = window_origins(height, spec.window, spec.stride());
  const auto xs = window_origins(width, spec.window, spec.stride());
  std::vector<WindowOrigin> out;
  for (std::size_t y : ys)
    for (std::size_t x : xs) out.push_back({y, x});
  return out;
}

Tensor4 sliding_window_infer(const WindowPredictor& predict,
                             const Tensor4& image, const WindowSpec& spec,
                             const std::vector<WindowOrigin>* order) {
  const Shape s = image.shape();
  if (s.n != 1) throw ConfigError("sliding window inference takes one image");
  const std::vector<WindowOrigin> grid = order ? *order : window_grid(s.h, s.w, spec);
  const std::size_t win = spec.window;

  std::vector<double> weight(win * win, 1.0);
  if (spec.blend == Blend::kGaussian) {
    const double sigma = static_cast<double>(win) / 8.0;
    const double c = (static_cast<double>(win) - 1.0) / 2.0;
    for (std::size_t y = 0; y < win; ++y)
      for (std::size_t x = 0; x < win; ++x) {
        const double dy = static_cast<double>(y) - c;
        const double dx = static_cast<double>(x) - c;
        weight[y * win + x] =
            std::max(std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)), 1e-3);
      }
  }

  // Running weighted mean: equal to sum(w * p) / sum(w), and exact when all
  // windows agree.
  Tensor4 result({1, 1, s.h, s.w});
  std::vector<double> total(s.h * s.w, 0.0);
  for (const WindowOrigin& o : grid) {
    const Tensor4 probs = predict(image.crop(o.y, o.x, win, win));
    if (probs.shape() != Shape{1, 1, win, win}) {
      throw ConfigError("window predictor returned " + probs.shape().str() +
                        ", expected (1,1," + std::to_string(win) + "," +
                        std::to_string(win) + ")");
    }
    for (std::size_t y = 0; y < win; ++y)
      for (std::size_t x = 0; x < win; ++x) {
        const std::size_t idx = (o.y + y) * s.w + (o.x + x);
        const double w = weight[y * win + x];
        total[idx] += w;
        double& m = result[idx];
        m += (w / total[idx]) * (probs[y * win + x] - m);
      }
  }
  for (double t : total) {
    if (!(t > 0.0)) throw HarnessError("window grid left a pixel uncovered");
  }
  return result;
}

Tensor4 sliding_window_infer(const UNetModel& model, const Tensor4& image,
                             const WindowSpec& spec) {
  const std::size_t f = model.config().spatial_factor();
  if (spec.window % f != 0) {
    throw ConfigError("window " + std::to_string(spec.window) +
                      " must be a multiple of the model's spatial factor " +
                      std::to_string(f));
  }
  return sliding_window_infer(
      [&model](const Tensor4& w) { return model.predict(w); }, image, spec);
}

CascadeResult run_cascade(const WindowPredictor& model1,
                          const WindowPredictor& model2,
                          std::size_t model2_in_channels, const Tensor4& image,
                          const ThresholdSet& thresholds,
                          const WindowSpec& spec) {
  thresholds.validate();
  check_cascade_channels(image.shape().c, model2_in_channels, thresholds);
  CascadeResult r;
  r.probs1 = sliding_window_infer(model1, normalize(image), spec);
  r.stack = binarize_multi(r.probs1, thresholds);
  r.model2_input = assemble_model2_input(normalize(to_grayscale(image)), r.stack,
                                         model2_in_channels);
  r.probs2 = sliding_window_infer(model2, r.model2_input, spec);
  r.final_mask = Tensor4(r.probs2.shape());
  for (std::size_t i = 0; i < r.probs2.size(); ++i)
    r.final_mask[i] = r.probs2[i] >= kFinalThreshold ? 1.0 : 0.0;
  return r;
}

CascadeResult run_cascade(const UNetModel& model1, const UNetModel& model2,
                          const Tensor4& image, const ThresholdSet& thresholds,
                          const WindowSpec& spec) {
  check_cascade_channels(model1.config().in_channels,
                         model2.config().in_channels, thresholds);
  for (const UNetModel* m : {&model1, &model2}) {
    if (spec.window % m->config().spatial_factor() != 0) {
      throw ConfigError("window " + std::to_string(spec.window) +
                        " must be a multiple of " +
                        std::to_string(m->config().spatial_factor()));
    }
  }
  return run_cascade([&](const Tensor4& w) { return model1.predict(w); },
                     [&](const Tensor4& w) { return model2.predict(w); },
                     model2.config().in_channels, image, thresholds, spec);
}

Tensor4 render_overlay(const Tensor4& image, const Tensor4& mask) {
  const Shape s = image.shape();
  Tensor4 out({1, 3, s.h, s.w});
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src = s.c == 3 ? c : 0;
    std::copy(image.plane(0, src).begin(), image.plane(0, src).end(),
              out.plane(0, c).begin());
  }
  auto on = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(s.h) || x >= static_cast<long>(s.w))
      return false;
    return mask.at(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) >= 0.5;
  };
  for (long y = 0; y < static_cast<long>(s.h); ++y)
    for (long x = 0; x < static_cast<long>(s.w); ++x) {
      if (!on(y, x)) continue;
      if (on(y - 1, x) && on(y + 1, x) && on(y, x - 1) && on(y, x + 1)) continue;
      const auto yy = static_cast<std::size_t>(y);
      const auto xx = static_cast<std::size_t>(x);
      out.at(0, 0, yy, xx) = 0.0;
      out.at(0, 1, yy, xx) = 1.0;
      out.at(0, 2, yy, xx) = 0.0;
    }
  return out;
}

std::vector<std::filesystem::path> export_cascade_pngs(
    const std::filesystem::path& dir, const std::string& id,
    const Tensor4& image, const CascadeResult& result, bool masks_only,
    const std::map<std::string, std::string>& text) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& suffix, const Tensor4& t) {
    Image8 img = tensor_to_image(t);
    img.text = text;
    const auto path = dir / (id + suffix + ".png");
    write_png(path, img);
    written.push_back(path);
  };
  emit("_mask", result.final_mask);
  if (masks_only) return written;
  emit("_heatmap", result.probs1);
  for (std::size_t t = 0; t < result.stack.shape().c; ++t)
    emit("_stack" + std::to_string(t), result.stack.slice_channels(t, 1));
  emit("_overlay", render_overlay(image, result.final_mask));
  return written;
}

}  // namespace ctiunet
