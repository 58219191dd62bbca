#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "onlstm/numerics/tensor.hpp"

namespace onlstm {

// A trainable array. `grad` is an accumulator written by Tape::backward, so it
// stays mutable even when the owning model is used through a const reference.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  mutable Tensor grad;

  void zero_grad() const { grad.fill(0.0); }
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records one forward pass. Nodes are appended in evaluation order, so the
// reverse of insertion order is a reverse topological order of the graph.
// A tape in inference mode keeps values only and cannot run backward.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  // Receives the node's own value and d(root)/d(value), and adds its
  // contribution into the inputs' gradients through Tape::grad_of.
  using Backprop = std::function<void(Tape&, const Tensor& out, const Tensor& grad_out)>;

  explicit Tape(Mode mode = Mode::kRecord);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::kRecord; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  // Leaf bound to a parameter. Repeated calls with the same parameter return
  // the same node. The value is borrowed, not copied.
  Var parameter(const Parameter& p);

  // Seeds d(root)/d(root) = 1 and propagates to every parameter reachable from
  // root, adding into Parameter::grad. May be called more than once; each call
  // adds another full copy of the gradients.
  void backward(Var root);

  // --- interface for operation implementations ---
  Var record(Tensor value, std::initializer_list<Var> inputs, const char* op, Backprop backprop);
  Var record(Tensor value, const std::vector<Var>& inputs, const char* op, Backprop backprop);
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  const Tensor& value(Var v) const;
  // Gradient buffer of v, allocated as zeros on first use.
  Tensor& grad_of(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;
    const Parameter* param = nullptr;
    Tensor grad;
    Backprop backprop;
    bool needs_grad = false;
  };

  template <typename Range>
  Var record_impl(Tensor value, const Range& inputs, const char* op, Backprop backprop);

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> parameter_nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// Test hook: scales the derivative rule of one primitive by `factor` while the
// guard is alive (on the current thread). Used to show that gradient checking
// detects a broken rule.
enum class Primitive {
  kMatmul,
  kAdd,
  kMul,
  kSigmoid,
  kTanh,
  kSoftmax,
  kCumsum,
  kConcat,
  kSlice,
  kRepeat,
  kGather,
  kCrossEntropy,
};

class ScopedDerivativeFault {
 public:
  ScopedDerivativeFault(Primitive primitive, double factor);
  ~ScopedDerivativeFault();
  ScopedDerivativeFault(const ScopedDerivativeFault&) = delete;
  ScopedDerivativeFault& operator=(const ScopedDerivativeFault&) = delete;

 private:
  int previous_primitive_;
  double previous_factor_;
};

// Multiplier currently applied to the derivative rule of `primitive` (1 unless
// a fault is injected).
double derivative_scale(Primitive primitive) noexcept;

}  // namespace onlstm
