#pragma once

#include "ctiunet/autograd.hpp"

namespace ctiunet {

// alpha weighs false positives, beta false negatives.
struct TverskyParams {
  double alpha = 0.5;
  double beta = 0.5;
  double smooth = 1e-5;

  static TverskyParams recall_leaning() { return {0.7, 0.3, 1e-5}; }
  static TverskyParams balanced() { return {0.5, 0.5, 1e-5}; }
  void validate() const;
};

struct CompositeLossConfig {
  TverskyParams tversky;
  double ce_weight = 0.5;
};

inline constexpr double kBceClamp = 1e-7;

// Loss value together with d(loss)/d(probs).
struct LossEval {
  double value = 0.0;
  Tensor4 grad;
};

// Batch-global soft Tversky: 1 - (TP + s) / (TP + a*FP + b*FN + s).
LossEval tversky_loss(const Tensor4& probs, const Tensor4& targets,
                      const TverskyParams& params);
// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
LossEval bce_loss(const Tensor4& probs, const Tensor4& targets);
// tversky + ce_weight * bce.
LossEval composite_loss(const Tensor4& probs, const Tensor4& targets,
                        const CompositeLossConfig& config);

// Taped versions; targets are constants.
Value tversky_loss(Value probs, const Tensor4& targets,
                   const TverskyParams& params);
Value bce_loss(Value probs, const Tensor4& targets);
Value composite_loss(Value probs, const Tensor4& targets,
                     const CompositeLossConfig& config);

}  // namespace ctiunet
