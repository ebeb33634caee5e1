#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctiunet/adam.hpp"
#include "ctiunet/augment.hpp"
#include "ctiunet/cascade.hpp"
#include "ctiunet/data.hpp"
#include "ctiunet/loss.hpp"
#include "ctiunet/run_config.hpp"
#include "ctiunet/unet.hpp"

namespace ctiunet {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dsc = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  // Epoch whose weights are in best_checkpoint; unset means the initial
  // weights (no epoch has run).
  std::optional<std::size_t> best_epoch;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  double wall_seconds = 0.0;

  std::string to_tsv() const;
};

struct TrainOptions {
  CompositeLossConfig loss;
  AdamOptions adam;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  bool augment = true;
  AugmentSpec augment_spec = AugmentSpec::defaults();
  std::uint64_t seed = 0;  // drives the per-epoch shuffle
  // Empty: train in memory only. Otherwise <name>_best.ctiu, <name>_last.ctiu
  // and <name>_log.tsv are (re)written after every epoch.
  std::filesystem::path checkpoint_dir;
  std::string name = "model";
  std::map<std::string, std::string> metadata;  // stamped into checkpoints
  std::function<void(const EpochRecord&)> on_epoch;
};

// Produces refinement-network teacher probabilities (1, 1, H, W) for an RGB
// image in [0, 1]. The mask is offered so tests can build synthetic teachers;
// `key` is a per-call seed for teachers that need randomness.
using Teacher = std::function<Tensor4(const Tensor4& image, const Tensor4& mask,
                                      std::uint64_t key)>;

// Teacher backed by a trained initial network; `model` must outlive it.
Teacher model_teacher(const UNetModel& model, TeacherMode mode,
                      const WindowSpec& window);

// Refinement-network input for one image: [normalized gray, binarized stack].
Tensor4 stage2_input(const Tensor4& image, const Tensor4& teacher_probs,
                     const ThresholdSet& thresholds, std::size_t in_channels);

// Trains the initial network on RGB images. When val is empty, val metrics are
// reported as 0 and the best checkpoint tracks the first epoch.
TrainLog train_stage1(UNetModel& model, const Dataset& train,
                      const Dataset& val, const TrainOptions& options);

// Trains the refinement network. Each training pair is augmented first and the
// teacher runs on the augmented pair, so stack and mask stay aligned.
TrainLog train_stage2(UNetModel& model, const Teacher& teacher,
                      const ThresholdSet& thresholds, const Dataset& train,
                      const Dataset& val, const TrainOptions& options);

// Options for stage 1 / stage 2 from a run config.
TrainOptions stage1_options(const RunConfig& config);
TrainOptions stage2_options(const RunConfig& config);

}  // namespace ctiunet
