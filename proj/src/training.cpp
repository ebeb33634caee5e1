#include "ctiunet/training.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "ctiunet/errors.hpp"
#include "ctiunet/metrics.hpp"
#include "ctiunet/ops.hpp"

namespace ctiunet {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Builds the network input for one (possibly augmented) pair.
using InputFn = std::function<Tensor4(const ImagePair& pair, std::uint64_t key)>;

struct Prepared {
  Tensor4 input;
  Tensor4 mask;
};

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

// Portable Fisher-Yates; std::shuffle's draw pattern is library-specific.
void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

TrainLog train_loop(UNetModel& model, const Dataset& train, const Dataset& val,
                    const TrainOptions& opt, const InputFn& make_input) {
  opt.loss.tversky.validate();
  if (opt.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (opt.epochs > 0 && train.empty()) {
    throw ConfigError("training split is empty");
  }
  opt.augment_spec.validate();
  const auto t_start = Clock::now();

  TrainLog log;
  const bool persist = !opt.checkpoint_dir.empty();
  if (persist) {
    std::filesystem::create_directories(opt.checkpoint_dir);
    log.best_checkpoint = opt.checkpoint_dir / (opt.name + "_best.ctiu");
    log.last_checkpoint = opt.checkpoint_dir / (opt.name + "_last.ctiu");
  }
  for (const auto& [k, v] : opt.metadata) model.metadata()[k] = v;
  model.metadata()["name"] = opt.name;
  auto checkpoint = [&](std::size_t epoch, bool best) {
    if (!persist) return;
    model.metadata()["epoch"] = std::to_string(epoch);
    save_model(model, log.last_checkpoint);
    if (best) save_model(model, log.best_checkpoint);
    write_text_atomic(opt.checkpoint_dir / (opt.name + "_log.tsv"), log.to_tsv());
  };

  model.round_to_storage_precision();
  checkpoint(0, true);

  // Validation inputs are fixed across epochs (no augmentation, frozen teacher).
  std::vector<Prepared> val_set;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const Sample& s = val.samples[i];
    val_set.push_back({make_input({s.image, s.mask}, derive_seed(opt.seed, i, ~0ULL)),
                       s.mask});
  }

  Adam adam(model.parameters(), opt.adam);
  std::vector<std::size_t> order(train.size());
  double best_dsc = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    const auto t_epoch = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(opt.seed ^ 0x5bd1e995ULL, 0, epoch));
    shuffle_indices(order, rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += opt.batch_size) {
      const std::size_t end = std::min(order.size(), b + opt.batch_size);
      std::vector<Tensor4> inputs;
      std::vector<Tensor4> masks;
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t i = order[k];
        const Sample& s = train.samples[i];
        ImagePair pair{s.image, s.mask};
        if (opt.augment) pair = apply_pipeline(pair, opt.augment_spec, i, epoch).pair;
        inputs.push_back(make_input(pair, derive_seed(opt.seed, i, epoch)));
        masks.push_back(std::move(pair.mask));
      }
      const Tensor4 x = stack_batch(inputs);
      const Tensor4 y = stack_batch(masks);

      Tape tape;
      const Value logits = model.forward(tape, tape.constant(x));
      const Value loss = composite_loss(sigmoid(logits), y, opt.loss);
      loss_sum += tape.value(loss)[0];
      ++batches;
      adam.zero_grad();
      tape.backward(loss);
      adam.step();
      model.round_to_storage_precision();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (!val_set.empty()) {
      double vloss = 0.0;
      double vdsc = 0.0;
      for (const Prepared& p : val_set) {
        const Tensor4 probs = model.predict(p.input);
        vloss += composite_loss(probs, p.mask, opt.loss).value;
        Tensor4 pred(probs.shape());
        for (std::size_t j = 0; j < probs.size(); ++j)
          pred[j] = probs[j] >= kFinalThreshold ? 1.0 : 0.0;
        vdsc += dsc(confusion(pred, p.mask));
      }
      rec.val_loss = vloss / static_cast<double>(val_set.size());
      rec.val_dsc = vdsc / static_cast<double>(val_set.size());
    }
    rec.seconds = seconds_since(t_epoch);
    log.epochs.push_back(rec);

    const bool improved = rec.val_dsc > best_dsc;
    if (improved) {
      best_dsc = rec.val_dsc;
      log.best_epoch = epoch;
    }
    log.wall_seconds = seconds_since(t_start);
    checkpoint(epoch, improved);
    if (opt.on_epoch) opt.on_epoch(rec);
  }
  log.wall_seconds = seconds_since(t_start);
  if (persist) write_text_atomic(opt.checkpoint_dir / (opt.name + "_log.tsv"), log.to_tsv());
  return log;
}

}  // namespace

std::string TrainLog::to_tsv() const {
  std::string out = "epoch\ttrain_loss\tval_loss\tval_dsc\tseconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.3f\n", e.epoch, e.train_loss,
                  e.val_loss, e.val_dsc, e.seconds);
    out += buf;
  }
  out += "# best_epoch\t" + (best_epoch ? std::to_string(*best_epoch) : std::string("init")) +
         "\n";
  out += "# best_checkpoint\t" + best_checkpoint.string() + "\n";
  out += "# last_checkpoint\t" + last_checkpoint.string() + "\n";
  std::snprintf(buf, sizeof buf, "# wall_seconds\t%.3f\n", wall_seconds);
  out += buf;
  return out;
}

Teacher model_teacher(const UNetModel& model, TeacherMode mode, const WindowSpec& window) {
  return [&model, mode, window](const Tensor4& image, const Tensor4&, std::uint64_t) {
    const Tensor4 x = normalize(image);
    if (mode == TeacherMode::kSlidingWindow) return sliding_window_infer(model, x, window);
    return model.predict(x);
  };
}

Tensor4 stage2_input(const Tensor4& image, const Tensor4& teacher_probs,
                     const ThresholdSet& thresholds, std::size_t in_channels) {
  return assemble_model2_input(normalize(to_grayscale(image)),
                               binarize_multi(teacher_probs, thresholds), in_channels);
}

TrainLog train_stage1(UNetModel& model, const Dataset& train, const Dataset& val,
                      const TrainOptions& options) {
  if (model.config().in_channels != 3) {
    throw ConfigError("initial network expects 3 input channels, config has " +
                      std::to_string(model.config().in_channels));
  }
  return train_loop(model, train, val, options,
                    [](const ImagePair& p, std::uint64_t) { return normalize(p.image); });
}

TrainLog train_stage2(UNetModel& model, const Teacher& teacher,
                      const ThresholdSet& thresholds, const Dataset& train,
                      const Dataset& val, const TrainOptions& options) {
  thresholds.validate();
  const std::size_t in = model.config().in_channels;
  check_cascade_channels(3, in, thresholds);
  return train_loop(model, train, val, options,
                    [&](const ImagePair& p, std::uint64_t key) {
                      return stage2_input(p.image, teacher(p.image, p.mask, key),
                                          thresholds, in);
                    });
}

namespace {

TrainOptions common_options(const RunConfig& c) {
  TrainOptions o;
  o.adam = c.adam;
  o.batch_size = c.batch_size;
  o.epochs = c.epochs;
  o.augment = c.augment;
  o.augment_spec = c.augment_spec;
  o.augment_spec.master_seed = c.seed;
  o.seed = c.seed;
  o.checkpoint_dir = c.out_dir;
  o.metadata["config_hash"] = c.hash();
  o.metadata["seed"] = std::to_string(c.seed);
  return o;
}

}  // namespace

TrainOptions stage1_options(const RunConfig& config) {
  TrainOptions o = common_options(config);
  o.loss = config.loss1;
  o.name = "model1";
  return o;
}

TrainOptions stage2_options(const RunConfig& config) {
  TrainOptions o = common_options(config);
  o.loss = config.loss2;
  o.name = "model2";
  o.seed = config.seed + 1;
  return o;
}

}  // namespace ctiunet
