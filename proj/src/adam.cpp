#include "ctiunet/adam.hpp"

#include <cmath>

#include "ctiunet/errors.hpp"

namespace ctiunet {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  moments_.reserve(params_.size());
  for (const Parameter* p : params_) {
    moments_.push_back({Tensor4::zeros_like(p->value),
                        Tensor4::zeros_like(p->value)});
  }
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->has_grad) {
      throw HarnessError("adam step with no gradient for parameter '" +
                         p->name + "'");
    }
    if (p->grad.shape() != p->value.shape()) {
      throw HarnessError("gradient shape mismatch for parameter '" + p->name +
                         "'");
    }
  }
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor4& m = moments_[k].m;
    Tensor4& v = moments_[k].v;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace ctiunet
