#include "onlstm/training/optim.hpp"

#include <cmath>
#include <string>

#include "onlstm/errors.hpp"

namespace onlstm {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(config_.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->grad.all_finite()) throw NumericalError("non-finite gradient in parameter '" + p->name + "'");
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto value = params_[k]->value.values();
    const auto grad = params_[k]->grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      value[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip threshold must be positive");
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const Parameter* p : params) {
      for (double& g : p->grad.values()) g *= scale;
    }
  }
  return norm;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) p->zero_grad();
}

}  // namespace onlstm
