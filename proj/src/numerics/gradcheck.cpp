#include "onlstm/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "onlstm/errors.hpp"

namespace onlstm {

std::vector<Tensor> finite_diff_grad(const std::function<double()>& loss,
                                     const std::vector<Parameter*>& params, double epsilon) {
  if (!(epsilon > 0)) throw ContractError("finite_diff_grad: epsilon must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) {
    Tensor g(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + epsilon;
      const double up = loss();
      p->value[i] = saved - epsilon;
      const double down = loss();
      p->value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("finite_diff_grad: non-finite loss when perturbing " + p->name + "[" +
                             std::to_string(i) + "]");
      }
      g[i] = (up - down) / (2.0 * epsilon);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  if (analytic.shape() != numeric.shape()) {
    throw DimensionError("relative_error: shapes " + shape_string(analytic.shape()) + " and " +
                         shape_string(numeric.shape()) + " differ");
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.relative_error);
  return w;
}

GradCheckReport check_gradients(const std::function<void()>& recorded_loss,
                                const std::function<double()>& plain_loss,
                                const std::vector<Parameter*>& params, double tolerance,
                                double epsilon) {
  for (Parameter* p : params) p->zero_grad();
  recorded_loss();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);
  for (Parameter* p : params) p->zero_grad();

  const auto numeric = finite_diff_grad(plain_loss, params, epsilon);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double err = relative_error(analytic[k], numeric[k]);
    report.entries.push_back({params[k]->name, err, err < tolerance});
  }
  return report;
}

}  // namespace onlstm
