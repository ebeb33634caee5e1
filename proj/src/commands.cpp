#include "ctiunet/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <set>

#include "ctiunet/cascade.hpp"
#include "ctiunet/errors.hpp"
#include "ctiunet/image_io.hpp"
#include "ctiunet/training.hpp"

namespace fs = std::filesystem;

namespace ctiunet {
namespace {

template <typename F>
int guarded(std::ostream& err, const char* cmd, F&& body) {
  try {
    return body();
  } catch (const DatasetLoadError& e) {
    err << cmd << ": dataset has " << e.errors().size() << " error(s)\n";
    for (const auto& msg : e.errors()) err << "  " << msg << "\n";
  } catch (const ConfigError& e) {
    err << cmd << ": configuration error: " << e.what() << "\n";
  } catch (const LoadError& e) {
    err << cmd << ": cannot load checkpoint: " << e.what() << "\n";
  }
  return kExitConfig;
}

std::map<std::string, std::string> run_text(const RunConfig& c) {
  return {{kTextConfigHash, c.hash()}, {kTextSeed, std::to_string(c.seed)}};
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs,
                                    std::vector<std::string>& failures) {
  std::vector<fs::path> files;
  for (const fs::path& in : inputs) {
    if (fs::is_regular_file(in)) {
      files.push_back(in);
    } else if (fs::is_directory(in)) {
      bool layout = false;
      for (Condition c : kAllConditions) {
        const fs::path img = in / std::string(condition_dir(c)) / "img";
        if (!fs::is_directory(img)) continue;
        layout = true;
        for (auto& p : pngs_in(img)) files.push_back(p);
      }
      if (!layout)
        for (auto& p : pngs_in(in)) files.push_back(p);
    } else {
      failures.push_back(in.string() + ": no such file or directory");
    }
  }
  return files;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Tensor4 binary_mask_from_png(const fs::path& path) {
  const Image8 img = read_png(path);
  if (img.channels != 1) {
    throw ValidationError(path.string() + ": mask must be single-channel");
  }
  Tensor4 t({1, 1, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i] >= 128 ? 1.0 : 0.0;
  return t;
}

}  // namespace

Dataset training_data(const RunConfig& config) {
  if (!config.data_root.empty()) return load_dataset(config.data_root);
  SyntheticSpec spec;
  spec.count = config.synthetic_count;
  spec.size = config.image_size;
  spec.seed = config.seed;
  spec.difficulty = config.difficulty;
  return generate_synthetic(spec);
}

int cmd_gen_synthetic(const RunConfig& config, const fs::path& dest, std::ostream& out,
                      std::ostream& err) {
  return guarded(err, "gen-synthetic", [&] {
    SyntheticSpec spec;
    spec.count = config.synthetic_count;
    spec.size = config.image_size;
    spec.seed = config.seed;
    spec.difficulty = config.difficulty;
    const Dataset ds = generate_synthetic(spec);
    write_dataset(ds, dest, run_text(config));
    const Dataset back = load_dataset(dest);
    out << "wrote " << back.size() << " samples to " << dest.string() << "\n"
        << "manifest_sha256\t" << back.manifest_hash << "\n";
    return kExitOk;
  });
}

int cmd_train_stage1(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "train-stage1", [&] {
    config.validate();
    const Dataset data = training_data(config);
    const auto [train, val] = split(data, {config.train_fraction, config.seed});
    err << "train-stage1: " << train.size() << " train / " << val.size()
        << " val samples, config " << config.hash() << "\n";
    UNetModel model = UNetModel::build(config.model1, config.seed);
    TrainOptions opt = stage1_options(config);
    opt.on_epoch = [&](const EpochRecord& r) {
      err << "train-stage1: epoch " << r.epoch << " loss " << r.train_loss << " val_loss "
          << r.val_loss << " val_dsc " << r.val_dsc << "\n";
    };
    const TrainLog log = train_stage1(model, train, val, opt);
    out << "best_checkpoint\t" << log.best_checkpoint.string() << "\n"
        << "best_epoch\t" << (log.best_epoch ? std::to_string(*log.best_epoch) : "init")
        << "\n";
    if (log.best_epoch)
      out << "best_val_dsc\t" << log.epochs[*log.best_epoch - 1].val_dsc << "\n";
    return kExitOk;
  });
}

int cmd_train_stage2(const RunConfig& config, const fs::path& model1_path, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, "train-stage2", [&] {
    config.validate();
    check_cascade_channels(config.model1.in_channels, config.model2.in_channels,
                           config.thresholds);
    const UNetModel model1 = load_model(model1_path);
    if (model1.config().in_channels != 3) {
      throw ConfigError("checkpoint " + model1_path.string() + " is not an RGB initial network");
    }
    const auto it = model1.metadata().find("config_hash");
    if (it != model1.metadata().end() && it->second != config.hash()) {
      err << "train-stage2: warning: checkpoint config hash " << it->second
          << " differs from run config " << config.hash() << "\n";
    }
    if (config.stage2_teacher == TeacherMode::kSlidingWindow &&
        config.window.window % model1.config().spatial_factor() != 0) {
      throw ConfigError("window size must be a multiple of " +
                        std::to_string(model1.config().spatial_factor()));
    }
    const Dataset data = training_data(config);
    const auto [train, val] = split(data, {config.train_fraction, config.seed});
    UNetModel model2 = UNetModel::build(config.model2, config.seed + 1);
    TrainOptions opt = stage2_options(config);
    opt.on_epoch = [&](const EpochRecord& r) {
      err << "train-stage2: epoch " << r.epoch << " loss " << r.train_loss << " val_loss "
          << r.val_loss << " val_dsc " << r.val_dsc << "\n";
    };
    const TrainLog log =
        train_stage2(model2, model_teacher(model1, config.stage2_teacher, config.window),
                     config.thresholds, train, val, opt);
    out << "best_checkpoint\t" << log.best_checkpoint.string() << "\n"
        << "best_epoch\t" << (log.best_epoch ? std::to_string(*log.best_epoch) : "init")
        << "\n";
    if (log.best_epoch)
      out << "best_val_dsc\t" << log.epochs[*log.best_epoch - 1].val_dsc << "\n";
    return kExitOk;
  });
}

int cmd_infer(const RunConfig& config, const InferOptions& options, std::ostream& out,
              std::ostream& err) {
  return guarded(err, "infer", [&] {
    config.thresholds.validate();
    config.window.validate();
    const UNetModel model1 = load_model(options.model1);
    const UNetModel model2 = load_model(options.model2);
    check_cascade_channels(model1.config().in_channels, model2.config().in_channels,
                           config.thresholds);
    for (const UNetModel* m : {&model1, &model2}) {
      if (config.window.window % m->config().spatial_factor() != 0) {
        throw ConfigError("window size " + std::to_string(config.window.window) +
                          " must be a multiple of " +
                          std::to_string(m->config().spatial_factor()));
      }
    }
    std::vector<std::string> failures;
    const auto files = expand_inputs(options.inputs, failures);
    const auto text = run_text(config);
    std::size_t ok = 0;
    for (const fs::path& file : files) {
      try {
        const Image8 img = read_png(file);
        if (img.channels != 3) throw ValidationError("expected an RGB image");
        const Tensor4 image = image_to_tensor(img);
        const CascadeResult r =
            run_cascade(model1, model2, image, config.thresholds, config.window);
        export_cascade_pngs(options.out_dir, file.stem().string(), image, r,
                            options.masks_only, text);
        ++ok;
      } catch (const std::exception& e) {
        failures.push_back(file.string() + ": " + e.what());
      }
    }
    out << "processed " << ok << " image(s), " << failures.size() << " failure(s)\n";
    for (const auto& f : failures) err << "infer: " << f << "\n";
    return failures.empty() ? kExitOk : kExitPartial;
  });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err,
             MetricsReport* report_out) {
  return guarded(err, "eval", [&] {
    const Dataset gt = load_dataset(options.gt_dir);
    if (!fs::is_directory(options.pred_dir)) {
      throw ConfigError("prediction directory " + options.pred_dir.string() + " not found");
    }
    std::vector<SampleScore> scores;
    std::vector<std::string> unmatched;
    std::set<std::string> gt_ids;
    std::optional<std::string> pred_hash;
    std::string seed_text;
    for (const Sample& s : gt.samples) {
      gt_ids.insert(s.id);
      const fs::path candidates[] = {
          options.pred_dir / (s.id + "_mask.png"),
          options.pred_dir / (s.id + ".png"),
          options.pred_dir / std::string(condition_dir(s.condition)) / "mask" / (s.id + ".png")};
      const fs::path* found = nullptr;
      for (const auto& c : candidates)
        if (fs::is_regular_file(c)) {
          found = &c;
          break;
        }
      if (!found) {
        unmatched.push_back(s.id + " (no prediction)");
        continue;
      }
      const Image8 pred_png = read_png(*found);
      const Image8 gt_png = read_png(gt.root / std::string(condition_dir(s.condition)) /
                                     "mask" / (s.id + ".png"));
      const auto ph = pred_png.text.find(kTextConfigHash);
      const auto gh = gt_png.text.find(kTextConfigHash);
      if (ph != pred_png.text.end()) {
        if (pred_hash && *pred_hash != ph->second && !options.force) {
          throw ConfigError("predictions carry different config hashes (" + *pred_hash +
                            " vs " + ph->second + "); pass --force to compare anyway");
        }
        pred_hash = ph->second;
        if (const auto sd = pred_png.text.find(kTextSeed); sd != pred_png.text.end())
          seed_text = sd->second;
        if (gh != gt_png.text.end() && gh->second != ph->second && !options.force) {
          throw ConfigError("config hash mismatch for " + s.id + ": prediction " + ph->second +
                            ", ground truth " + gh->second +
                            "; pass --force to compare anyway");
        }
      }
      const Tensor4 pred = binary_mask_from_png(*found);
      if (!(pred.shape() == s.mask.shape())) {
        unmatched.push_back(s.id + " (size " + pred.shape().str() + " vs " +
                            s.mask.shape().str() + ")");
        continue;
      }
      const ConfusionCounts c = confusion(pred, s.mask);
      scores.push_back({s.condition, dsc(c), iou(c), s.id});
    }
    // Prediction masks with no ground-truth counterpart; cascade intermediates
    // (heatmap, stack channels, overlay) are not predictions.
    static const std::regex intermediate(".*_(heatmap|overlay|stack[0-9]+)");
    for (const fs::path& p : pngs_in(options.pred_dir)) {
      std::string id = p.stem().string();
      if (std::regex_match(id, intermediate)) continue;
      if (id.size() > 5 && id.compare(id.size() - 5, 5, "_mask") == 0) id.resize(id.size() - 5);
      if (gt_ids.count(id) == 0) unmatched.push_back(id + " (no ground truth)");
    }

    MetricsReport report = aggregate(scores);
    report.config_hash = pred_hash.value_or("");
    if (!seed_text.empty()) report.seed = std::stoull(seed_text);
    report.timestamp = utc_timestamp();
    const std::string table = report.render_table(options.method);
    out << table;
    if (!options.report_dir.empty()) {
      fs::create_directories(options.report_dir);
      write_file_atomic(options.report_dir / "report.txt", table);
      write_file_atomic(options.report_dir / "report.tsv", report.to_tsv());
    }
    if (report_out) *report_out = report;
    if (!unmatched.empty()) {
      err << "eval: warning: " << unmatched.size() << " unmatched identifier(s):\n";
      for (const auto& u : unmatched) err << "  " << u << "\n";
      return kExitPartial;
    }
    return kExitOk;
  });
}

}  // namespace ctiunet
