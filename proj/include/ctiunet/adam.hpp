#pragma once

#include <cstddef>
#include <vector>

#include "ctiunet/autograd.hpp"

namespace ctiunet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are tied to parameter positions in the
// list given at construction.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  // Throws HarnessError if any parameter has no populated gradient.
  void step();
  void zero_grad();

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  struct Moments {
    Tensor4 m;
    Tensor4 v;
  };

  std::vector<Parameter*> params_;
  std::vector<Moments> moments_;
  AdamOptions options_;
  std::size_t t_ = 0;
};

}  // namespace ctiunet
