#pragma once

#include <cstddef>
#include <vector>

#include "onlstm/numerics/tape.hpp"

namespace onlstm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected moments. Reads Parameter::grad and leaves it
// untouched; the caller resets gradients between steps.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  // Throws NumericalError naming the parameter if any gradient is non-finite;
  // in that case no parameter is modified.
  void step();

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const Tensor& first_moment(std::size_t k) const { return m_.at(k); }
  const Tensor& second_moment(std::size_t k) const { return v_.at(k); }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t steps_ = 0;
};

// Global L2 norm of all gradients. If it exceeds max_norm every gradient is
// scaled by max_norm / norm. Returns the norm before clipping.
double clip_gradients(const std::vector<Parameter*>& params, double max_norm);

void zero_grads(const std::vector<Parameter*>& params);

}  // namespace onlstm
