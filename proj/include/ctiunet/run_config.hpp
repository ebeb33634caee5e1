#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ctiunet/adam.hpp"
#include "ctiunet/augment.hpp"
#include "ctiunet/cascade.hpp"
#include "ctiunet/data.hpp"
#include "ctiunet/loss.hpp"
#include "ctiunet/unet.hpp"

namespace ctiunet {

enum class TeacherMode { kFullImage, kSlidingWindow };

// Everything a run needs. Defaults carry the published training setup
// (lr 1e-4, batch 4, 100 epochs, thresholds 0.01/0.1/0.6, Tversky 0.7/0.3 for
// the initial network and 0.5/0.5 for the refinement network, CE weight 0.5,
// 80/20 split).
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";

  // Empty data_root means "generate synthetic tiles in memory".
  std::filesystem::path data_root;
  std::size_t synthetic_count = 16;
  std::size_t image_size = 64;
  double difficulty = 0.5;
  double train_fraction = 0.8;

  UNetConfig model1{3, 1, {16, 32, 64, 128}, 3};
  UNetConfig model2{4, 1, {16, 32, 64, 128}, 3};

  ThresholdSet thresholds;
  WindowSpec window;
  TeacherMode stage2_teacher = TeacherMode::kFullImage;

  CompositeLossConfig loss1{TverskyParams::recall_leaning(), 0.5};
  CompositeLossConfig loss2{TverskyParams::balanced(), 0.5};

  AdamOptions adam;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;

  bool augment = true;
  AugmentSpec augment_spec = AugmentSpec::defaults();

  // Canonical text: sorted "key = value" lines. Parsing it reproduces the
  // config exactly.
  std::string to_text() const;
  // First 16 hex digits of the SHA-256 of to_text() without out_dir.
  std::string hash() const;
  void validate() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  // Applies a single key = value assignment (same keys as the file).
  void set(const std::string& key, const std::string& value);
};

}  // namespace ctiunet
