#include "ctiunet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "ctiunet/errors.hpp"

namespace ctiunet {
namespace {

void check_pair(const Tensor4& probs, const Tensor4& targets) {
  if (probs.shape() != targets.shape()) {
    throw ConfigError("loss shape mismatch: probs " + probs.shape().str() +
                      ", targets " + targets.shape().str());
  }
  for (double p : probs.data()) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("loss probabilities must lie in [0, 1], found " +
                            std::to_string(p));
    }
  }
  for (double t : targets.data()) {
    if (t != 0.0 && t != 1.0) {
      throw ValidationError("loss targets must be binary, found " +
                            std::to_string(t));
    }
  }
}

Value record_loss(Value probs, LossEval eval) {
  Tape& tape = *probs.tape;
  return tape.record(Tensor4({1, 1, 1, 1}, eval.value), {probs},
                     [grad = std::move(eval.grad)](const Tensor4& gy,
                                                   std::vector<Tensor4*>& gin) {
                       Tensor4& gx = *gin[0];
                       for (std::size_t i = 0; i < gx.size(); ++i)
                         gx[i] += gy[0] * grad[i];
                     });
}

}  // namespace

void TverskyParams::validate() const {
  if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0) {
    throw ConfigError("tversky alpha and beta must lie in [0, 1]");
  }
  if (!(smooth > 0.0)) throw ConfigError("tversky smooth must be > 0");
}

LossEval tversky_loss(const Tensor4& probs, const Tensor4& targets,
                      const TverskyParams& params) {
  params.validate();
  check_pair(probs, targets);
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    const double t = targets[i];
    tp += p * t;
    fp += p * (1.0 - t);
    fn += (1.0 - p) * t;
  }
  const double num = tp + params.smooth;
  const double den = tp + params.alpha * fp + params.beta * fn + params.smooth;
  LossEval out;
  out.value = 1.0 - num / den;
  out.grad = Tensor4(probs.shape());
  const double den2 = den * den;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double t = targets[i];
    const double dden = t + params.alpha * (1.0 - t) - params.beta * t;
    out.grad[i] = -(t * den - num * dden) / den2;
  }
  return out;
}

LossEval bce_loss(const Tensor4& probs, const Tensor4& targets) {
  check_pair(probs, targets);
  const double count = static_cast<double>(probs.size());
  LossEval out;
  out.grad = Tensor4(probs.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double raw = probs[i];
    const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
    const double t = targets[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    if (raw > kBceClamp && raw < 1.0 - kBceClamp) {
      out.grad[i] = (-t / p + (1.0 - t) / (1.0 - p)) / count;
    }
  }
  out.value = acc / count;
  return out;
}

LossEval composite_loss(const Tensor4& probs, const Tensor4& targets,
                        const CompositeLossConfig& config) {
  LossEval tv = tversky_loss(probs, targets, config.tversky);
  if (config.ce_weight == 0.0) return tv;
  LossEval ce = bce_loss(probs, targets);
  tv.value += config.ce_weight * ce.value;
  for (std::size_t i = 0; i < tv.grad.size(); ++i)
    tv.grad[i] += config.ce_weight * ce.grad[i];
  return tv;
}

Value tversky_loss(Value probs, const Tensor4& targets,
                   const TverskyParams& params) {
  return record_loss(probs, tversky_loss(probs.value(), targets, params));
}

Value bce_loss(Value probs, const Tensor4& targets) {
  Tape& tape = *probs.tape;
  if (tape.tracking_kinks())
    for (double p : probs.value().data())
      tape.mix_kink_bit(p > kBceClamp && p < 1.0 - kBceClamp);
  return record_loss(probs, bce_loss(probs.value(), targets));
}

Value composite_loss(Value probs, const Tensor4& targets,
                     const CompositeLossConfig& config) {
  Tape& tape = *probs.tape;
  if (tape.tracking_kinks() && config.ce_weight != 0.0)
    for (double p : probs.value().data())
      tape.mix_kink_bit(p > kBceClamp && p < 1.0 - kBceClamp);
  return record_loss(probs, composite_loss(probs.value(), targets, config));
}

}  // namespace ctiunet
