#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctiunet/tensor.hpp"
#include "ctiunet/unet.hpp"

namespace ctiunet {

// Ascending binarization thresholds in (0, 1).
struct ThresholdSet {
  std::vector<double> values{0.01, 0.1, 0.6};

  std::size_t size() const { return values.size(); }
  void validate() const;
};

// (1, 1, H, W) probabilities -> (1, T, H, W) stack; channel i is
// prob >= threshold i.
Tensor4 binarize_multi(const Tensor4& probs, const ThresholdSet& thresholds);

// [gray, stack channels...] -> (1, 1 + T, H, W). Throws ConfigError when
// 1 + T differs from the refinement model's input channel count.
Tensor4 assemble_model2_input(const Tensor4& gray, const Tensor4& stack,
                              std::size_t model2_in_channels);

// Throws ConfigError naming both counts when the networks cannot be chained
// with these thresholds.
void check_cascade_channels(std::size_t model1_in, std::size_t model2_in,
                            const ThresholdSet& thresholds);

enum class Blend { kConstant, kGaussian };

struct WindowSpec {
  std::size_t window = 64;
  double overlap = 0.25;
  Blend blend = Blend::kConstant;

  std::size_t stride() const;
  void validate() const;
};

struct WindowOrigin {
  std::size_t y = 0;
  std::size_t x = 0;
};

// 0, stride, 2*stride, ... with the last origin moved so the window ends
// flush with the far edge.
std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window,
                                        std::size_t stride);
// Row-major grid of origins covering an H x W image.
std::vector<WindowOrigin> window_grid(std::size_t height, std::size_t width,
                                      const WindowSpec& spec);

// Maps a (1, C, w, w) window to (1, 1, w, w) probabilities.
using WindowPredictor = std::function<Tensor4(const Tensor4& window)>;

// Weighted average of overlapping window predictions. `order`, if given,
// overrides the row-major visiting order.
Tensor4 sliding_window_infer(const WindowPredictor& predict,
                             const Tensor4& image, const WindowSpec& spec,
                             const std::vector<WindowOrigin>* order = nullptr);
Tensor4 sliding_window_infer(const UNetModel& model, const Tensor4& image,
                             const WindowSpec& spec);

struct CascadeResult {
  Tensor4 probs1;        // (1, 1, H, W) initial network
  Tensor4 stack;         // (1, T, H, W)
  Tensor4 model2_input;  // (1, 1 + T, H, W)
  Tensor4 probs2;        // (1, 1, H, W) refinement network
  Tensor4 final_mask;    // probs2 >= 0.5
};

inline constexpr double kFinalThreshold = 0.5;

// image is (1, 3, H, W) in [0, 1].
CascadeResult run_cascade(const WindowPredictor& model1,
                          const WindowPredictor& model2,
                          std::size_t model2_in_channels, const Tensor4& image,
                          const ThresholdSet& thresholds,
                          const WindowSpec& spec);
CascadeResult run_cascade(const UNetModel& model1, const UNetModel& model2,
                          const Tensor4& image, const ThresholdSet& thresholds,
                          const WindowSpec& spec);

// Green boundary of `mask` drawn over the RGB image.
Tensor4 render_overlay(const Tensor4& image, const Tensor4& mask);

// Writes <id>_heatmap.png, <id>_stack<i>.png, <id>_mask.png and
// <id>_overlay.png (or only the mask). Returns the written paths.
std::vector<std::filesystem::path> export_cascade_pngs(
    const std::filesystem::path& dir, const std::string& id,
    const Tensor4& image, const CascadeResult& result, bool masks_only,
    const std::map<std::string, std::string>& text = {});

}  // namespace ctiunet
