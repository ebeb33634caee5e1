// Command-line front end: gen-synthetic, train-stage1, train-stage2, infer,
// eval. Exit codes: 0 success, 1 per-file failures, 2 configuration errors.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctiunet/commands.hpp"
#include "ctiunet/errors.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration file (key = value, [sections])");
  cmd->add_option("--seed", c.seed, "Master seed override");
  cmd->add_option("--epochs", c.epochs, "Epoch count override");
  cmd->add_option("--out", c.out, "Output location");
  cmd->add_option("--set", c.overrides, "Extra key=value override (repeatable)");
}

ctiunet::RunConfig resolve(const Common& c) {
  ctiunet::RunConfig cfg =
      c.config.empty() ? ctiunet::RunConfig{} : ctiunet::RunConfig::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ctiunet::ConfigError("--set expects key=value: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.epochs) cfg.epochs = *c.epochs;
  cfg.augment_spec.master_seed = cfg.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded threshold-integration U-Net segmentation"};
  app.require_subcommand(1);

  Common gen, tr1, tr2, inf, ev;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic dataset");
  add_common(gen_cmd, gen);

  auto* tr1_cmd = app.add_subcommand("train-stage1", "Train the initial network");
  add_common(tr1_cmd, tr1);

  std::string model1_ckpt;
  auto* tr2_cmd = app.add_subcommand("train-stage2", "Train the refinement network");
  add_common(tr2_cmd, tr2);
  tr2_cmd->add_option("--model1", model1_ckpt, "Initial-network checkpoint")->required();

  ctiunet::InferOptions infer_opt;
  std::vector<std::string> infer_inputs;
  std::string m1, m2;
  auto* inf_cmd = app.add_subcommand("infer", "Run the cascade on images");
  add_common(inf_cmd, inf);
  inf_cmd->add_option("--model1", m1, "Initial-network checkpoint")->required();
  inf_cmd->add_option("--model2", m2, "Refinement-network checkpoint")->required();
  inf_cmd->add_flag("--masks-only", infer_opt.masks_only, "Skip heatmaps, stacks, overlays");
  inf_cmd->add_option("inputs", infer_inputs, "PNG files or directories")->required();

  ctiunet::EvalOptions eval_opt;
  std::string pred, gt;
  auto* ev_cmd = app.add_subcommand("eval", "Score predicted masks against ground truth");
  add_common(ev_cmd, ev);
  ev_cmd->add_option("--pred", pred, "Prediction directory")->required();
  ev_cmd->add_option("--gt", gt, "Ground-truth dataset root")->required();
  ev_cmd->add_flag("--force", eval_opt.force, "Compare across config hashes");
  ev_cmd->add_option("--method", eval_opt.method, "Row label in the table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ctiunet::kExitConfig;
  }

  try {
    if (*gen_cmd) {
      const auto cfg = resolve(gen);
      const std::filesystem::path dest =
          !gen.out.empty() ? std::filesystem::path(gen.out)
          : !cfg.data_root.empty() ? cfg.data_root
                                   : cfg.out_dir / "data";
      return ctiunet::cmd_gen_synthetic(cfg, dest, std::cout, std::cerr);
    }
    if (*tr1_cmd) {
      auto cfg = resolve(tr1);
      if (!tr1.out.empty()) cfg.out_dir = tr1.out;
      return ctiunet::cmd_train_stage1(cfg, std::cout, std::cerr);
    }
    if (*tr2_cmd) {
      auto cfg = resolve(tr2);
      if (!tr2.out.empty()) cfg.out_dir = tr2.out;
      return ctiunet::cmd_train_stage2(cfg, model1_ckpt, std::cout, std::cerr);
    }
    if (*inf_cmd) {
      auto cfg = resolve(inf);
      infer_opt.model1 = m1;
      infer_opt.model2 = m2;
      infer_opt.inputs.assign(infer_inputs.begin(), infer_inputs.end());
      infer_opt.out_dir = inf.out.empty() ? cfg.out_dir / "predictions"
                                          : std::filesystem::path(inf.out);
      return ctiunet::cmd_infer(cfg, infer_opt, std::cout, std::cerr);
    }
    if (*ev_cmd) {
      eval_opt.pred_dir = pred;
      eval_opt.gt_dir = gt;
      eval_opt.report_dir = ev.out;
      return ctiunet::cmd_eval(eval_opt, std::cout, std::cerr);
    }
  } catch (const ctiunet::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return ctiunet::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ctiunet::kExitPartial;
  }
  return ctiunet::kExitConfig;
}
