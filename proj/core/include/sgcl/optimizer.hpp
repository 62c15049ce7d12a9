#pragma once

#include <string>
#include <vector>

#include "sgcl/tensor.hpp"

namespace sgcl {

struct AdamWConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.9;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam with bias correction. Parameters whose
/// requires_grad is off are dropped at construction and never updated;
/// decay applies only to names ending in ".weight" (not biases or layer
/// norms). An absent gradient counts as zero.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, AdamWConfig config);

  void step();
  void zero_grad();
  long step_count() const { return step_count_; }

 private:
  struct Slot {
    NamedParam param;
    std::vector<double> m;
    std::vector<double> v;
    bool decay;
  };
  std::vector<Slot> slots_;
  AdamWConfig config_;
  long step_count_ = 0;
};

}  // namespace sgcl
