#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctiunet/metrics.hpp"
#include "ctiunet/run_config.hpp"

namespace ctiunet {

// Process exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;  // some files failed or were unmatched
inline constexpr int kExitConfig = 2;   // configuration / input contract error

// PNG text keys carrying run identity.
inline constexpr char kTextConfigHash[] = "ctiunet.config_hash";
inline constexpr char kTextSeed[] = "ctiunet.seed";

// Writes the dataset layout + manifest to `dest`.
int cmd_gen_synthetic(const RunConfig& config, const std::filesystem::path& dest,
                      std::ostream& out, std::ostream& err);

// Training data for a run: data.root when set, otherwise in-memory synthetic
// tiles from the config's generator settings.
Dataset training_data(const RunConfig& config);

// Checkpoints and logs go to config.out_dir.
int cmd_train_stage1(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train_stage2(const RunConfig& config, const std::filesystem::path& model1,
                     std::ostream& out, std::ostream& err);

struct InferOptions {
  std::filesystem::path model1;
  std::filesystem::path model2;
  // PNG files, flat directories of PNGs, or dataset roots (<cond>/img/*.png).
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out_dir;
  bool masks_only = false;
};

int cmd_infer(const RunConfig& config, const InferOptions& options, std::ostream& out,
              std::ostream& err);

struct EvalOptions {
  std::filesystem::path pred_dir;
  std::filesystem::path gt_dir;  // dataset layout
  std::filesystem::path report_dir;  // empty: stdout only
  bool force = false;
  std::string method = "Our Method";
};

// `report`, when given, receives the aggregated result.
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err,
             MetricsReport* report = nullptr);

}  // namespace ctiunet
