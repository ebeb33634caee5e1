#include "ctiunet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctiunet/errors.hpp"

namespace ctiunet {
namespace {

struct Evaluation {
  double value;
  std::uint64_t kinks;
};

Evaluation evaluate(const ScalarObjective& f) {
  Tape tape(false);
  tape.track_kinks(true);
  Value out = f(tape);
  if (out.value().size() != 1) {
    throw HarnessError("grad_check objective must return a scalar, got " +
                       out.shape().str());
  }
  return {out.value()[0], tape.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(const ScalarObjective& f,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw HarnessError("grad_check step must be > 0");

  const Evaluation base = evaluate(f);
  const Evaluation again = evaluate(f);
  if (base.value != again.value || base.kinks != again.kinks) {
    throw HarnessError("objective is not deterministic: " +
                       std::to_string(base.value) + " vs " +
                       std::to_string(again.value));
  }

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape(true);
    tape.backward(f(tape));
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  const double h = options.step;

  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> candidates(n);
    std::iota(candidates.begin(), candidates.end(), 0);
    if (options.samples_per_parameter > 0 &&
        options.samples_per_parameter < n) {
      std::shuffle(candidates.begin(), candidates.end(), rng);
    }
    const std::size_t wanted = options.samples_per_parameter == 0
                                   ? n
                                   : std::min(n, options.samples_per_parameter);
    std::size_t checked = 0;
    std::size_t rejections = 0;
    for (std::size_t idx : candidates) {
      if (checked == wanted) break;
      const double original = p->value[idx];
      p->value[idx] = original + h;
      const Evaluation plus = evaluate(f);
      p->value[idx] = original - h;
      const Evaluation minus = evaluate(f);
      p->value[idx] = original;
      if (plus.kinks != base.kinks || minus.kinks != base.kinks) {
        ++report.rejected;
        if (++rejections > options.max_rejections * wanted) break;
        continue;
      }
      GradCheckEntry e;
      e.parameter = p->name;
      e.index = idx;
      e.analytic = p->grad[idx];
      e.numeric = (plus.value - minus.value) / (2.0 * h);
      const double denom = std::max(
          {std::abs(e.analytic), std::abs(e.numeric), options.abs_floor});
      e.relative_error = std::abs(e.analytic - e.numeric) / denom;
      report.max_relative_error =
          std::max(report.max_relative_error, e.relative_error);
      report.entries.push_back(e);
      ++checked;
    }
  }
  report.passed = !report.entries.empty() &&
                  report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace ctiunet
