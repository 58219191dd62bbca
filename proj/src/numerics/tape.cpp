#include "onlstm/numerics/tape.hpp"

#include <algorithm>

#include "onlstm/errors.hpp"

namespace onlstm {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

Tape::Tape(Mode mode) : mode_(mode) { nodes_.reserve(256); }

const Tensor& Tape::value(Var v) const {
  const Node& node = nodes_[v.id()];
  return node.borrowed ? *node.borrowed : node.value;
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::parameter(const Parameter& p) {
  if (auto it = parameter_nodes_.find(&p); it != parameter_nodes_.end()) {
    return Var(this, it->second);
  }
  Node node;
  node.borrowed = &p.value;
  node.param = &p;
  node.needs_grad = recording();
  nodes_.push_back(std::move(node));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  parameter_nodes_.emplace(&p, id);
  return Var(this, id);
}

template <typename Range>
Var Tape::record_impl(Tensor value, const Range& inputs, const char* op, Backprop backprop) {
  require_finite(value, op);
  Node node;
  node.value = std::move(value);
  if (recording()) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw ContractError(std::string(op) + ": operand from another tape");
      node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
    }
    if (node.needs_grad) node.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, const char* op,
                 Backprop backprop) {
  return record_impl(std::move(value), inputs, op, std::move(backprop));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, const char* op,
                 Backprop backprop) {
  return record_impl(std::move(value), inputs, op, std::move(backprop));
}

Tensor& Tape::grad_of(Var v) {
  Node& node = nodes_[v.id()];
  if (node.grad.empty()) node.grad = Tensor(value(v).shape());
  return node.grad;
}

void Tape::backward(Var root) {
  if (!recording()) throw ContractError("backward: tape was created in inference mode");
  if (root.tape() != this) throw ContractError("backward: root belongs to another tape");
  if (value(root).size() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " +
                        shape_string(value(root).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad_of(root).fill(1.0);

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backprop) {
      // The callback only touches gradients of earlier nodes, so `node.grad`
      // stays valid while it runs.
      node.backprop(*this, node.borrowed ? *node.borrowed : node.value, node.grad);
    } else if (node.param) {
      auto dst = node.param->grad.values();
      auto src = node.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

namespace {

thread_local int fault_primitive = -1;
thread_local double fault_factor = 1.0;

}  // namespace

ScopedDerivativeFault::ScopedDerivativeFault(Primitive primitive, double factor)
    : previous_primitive_(fault_primitive), previous_factor_(fault_factor) {
  fault_primitive = static_cast<int>(primitive);
  fault_factor = factor;
}

ScopedDerivativeFault::~ScopedDerivativeFault() {
  fault_primitive = previous_primitive_;
  fault_factor = previous_factor_;
}

double derivative_scale(Primitive primitive) noexcept {
  return fault_primitive == static_cast<int>(primitive) ? fault_factor : 1.0;
}

}  // namespace onlstm
