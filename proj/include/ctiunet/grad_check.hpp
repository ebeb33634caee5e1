#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctiunet/autograd.hpp"

namespace ctiunet {

struct GradCheckOptions {
  double step = 1e-4;  // central-difference half width h
  double tolerance = 1e-4;
  // Relative errors use max(|analytic|, |numeric|, abs_floor) as the
  // denominator so vanishing gradients do not blow up the ratio.
  double abs_floor = 1e-8;
  // 0 checks every coordinate; otherwise this many coordinates are
  // sampled per parameter.
  std::size_t samples_per_parameter = 0;
  // Perturbations that change the branch pattern of relu/max/clamp are
  // rejected and resampled, up to this many attempts per coordinate slot.
  std::size_t max_rejections = 50;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t rejected = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

// Builds the scalar objective on the given tape from the parameters.
using ScalarObjective = std::function<Value(Tape&)>;

// Compares reverse-mode gradients against central finite differences.
// Throws HarnessError if f is not deterministic.
GradCheckReport grad_check(const ScalarObjective& f,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});

}  // namespace ctiunet
