#pragma once

#include <functional>
#include <string>
#include <vector>

#include "onlstm/numerics/tape.hpp"

namespace onlstm {

// Central-difference gradient of `loss` with respect to every element of every
// parameter. `loss` must compute its value without recording a tape; the
// parameters are perturbed in place and restored before returning.
// Throws NumericalError when the loss is non-finite at a perturbed point.
std::vector<Tensor> finite_diff_grad(const std::function<double()>& loss,
                                     const std::vector<Parameter*>& params,
                                     double epsilon = 1e-5);

// ||a - b|| / max(||a||, ||b||), or 0 when both are zero.
double relative_error(const Tensor& analytic, const Tensor& numeric);

struct GradCheckEntry {
  std::string name;
  double relative_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed() const;
  double worst() const;
};

// Runs `recorded_loss` (which builds a tape, calls backward and leaves
// gradients in Parameter::grad) and compares against finite differences of
// `plain_loss`. Gradients are zeroed before and after.
GradCheckReport check_gradients(const std::function<void()>& recorded_loss,
                                const std::function<double()>& plain_loss,
                                const std::vector<Parameter*>& params, double tolerance,
                                double epsilon = 1e-5);

}  // namespace onlstm
