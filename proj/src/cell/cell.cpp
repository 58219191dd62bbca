#include "onlstm/cell/cell.hpp"

#include <cmath>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/ops.hpp"

namespace onlstm {

std::string_view to_string(CellKind kind) {
  return kind == CellKind::kOnLstm ? "onlstm" : "lstm";
}

CellKind parse_cell_kind(std::string_view text) {
  if (text == "onlstm") return CellKind::kOnLstm;
  if (text == "lstm") return CellKind::kLstm;
  throw ConfigError("unknown cell kind '" + std::string(text) + "' (expected onlstm or lstm)");
}

namespace {

constexpr const char* kGateNames[] = {"forget", "input", "output", "candidate", "master_forget",
                                      "master_input"};

std::size_t gate_rows(Gate g, std::size_t hidden, std::size_t master) {
  return static_cast<std::size_t>(g) >= static_cast<std::size_t>(Gate::kMasterForget) ? master : hidden;
}

}  // namespace

CellParams::CellParams(CellKind kind, std::size_t input_size, std::size_t hidden_size,
                       std::size_t chunk_factor, const std::string& name_prefix)
    : kind_(kind), input_size_(input_size), hidden_size_(hidden_size), chunk_factor_(chunk_factor) {
  if (input_size == 0 || hidden_size == 0) throw ConfigError("cell sizes must be positive");
  if (chunk_factor == 0) throw ConfigError("chunk factor must be positive");
  if (kind == CellKind::kOnLstm && hidden_size % chunk_factor != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden_size) +
                      " is not divisible by chunk factor " + std::to_string(chunk_factor));
  }
  const std::size_t count = kind == CellKind::kOnLstm ? 6 : 4;
  const std::size_t master = kind == CellKind::kOnLstm ? master_size() : 0;
  gates_.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t rows = gate_rows(static_cast<Gate>(k), hidden_size, master);
    const std::string base = name_prefix + "." + kGateNames[k];
    gates_.push_back(GateParams{
        Parameter(base + ".W", Tensor({rows, input_size})),
        Parameter(base + ".U", Tensor({rows, hidden_size})),
        Parameter(base + ".b", Tensor({rows})),
    });
  }
}

void CellParams::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size_));
  for (GateParams& g : gates_) {
    for (double& v : g.input_weight.value.values()) v = rng.uniform(-bound, bound);
    for (double& v : g.recurrent_weight.value.values()) v = rng.uniform(-bound, bound);
    g.bias.value.fill(0.0);
  }
  if (kind_ == CellKind::kOnLstm) gate(Gate::kMasterForget).bias.value.fill(1.0);
}

std::size_t CellParams::fused_size() const noexcept {
  return 4 * hidden_size_ + (kind_ == CellKind::kOnLstm ? 2 * master_size() : 0);
}

GateParams& CellParams::gate(Gate g) {
  const auto k = static_cast<std::size_t>(g);
  if (k >= gates_.size()) throw UnsupportedModelError("baseline LSTM cells have no master gates");
  return gates_[k];
}

const GateParams& CellParams::gate(Gate g) const {
  return const_cast<CellParams*>(this)->gate(g);
}

std::vector<Parameter*> CellParams::parameters() {
  std::vector<Parameter*> out;
  for (GateParams& g : gates_) {
    out.push_back(&g.input_weight);
    out.push_back(&g.recurrent_weight);
    out.push_back(&g.bias);
  }
  return out;
}

std::vector<const Parameter*> CellParams::parameters() const {
  std::vector<const Parameter*> out;
  for (const GateParams& g : gates_) {
    out.push_back(&g.input_weight);
    out.push_back(&g.recurrent_weight);
    out.push_back(&g.bias);
  }
  return out;
}

CellState CellState::zeros(std::size_t hidden_size) {
  return {Tensor({hidden_size}), Tensor({hidden_size})};
}

Tensor cumax(const Tensor& logits) { return cumax_rows(logits); }

Tensor expand_chunks(const Tensor& master, std::size_t chunk_factor) {
  Tape tape(Tape::Mode::kInference);
  return ops::repeat_cols(tape.constant(master), chunk_factor).value();
}

double split_estimate(std::span<const double> master_forget) {
  double total = 0.0;
  for (double v : master_forget) total += v;
  return static_cast<double>(master_forget.size()) - total;
}

namespace cell {
namespace {

struct UpdateVars {
  Var forget;
  Var input;
  Var cell;
};

// f-hat = f~ * (f * i~ + 1 - i~), i-hat = i~ * (i * f~ + 1 - f~), written
// through the overlap w = f~ * i~ as f * w + (f~ - w) and i * w + (i~ - w).
UpdateVars structured(Var f, Var i, Var master_f, Var master_i, Var prev_c, Var candidate) {
  Var overlap = ops::mul(master_f, master_i);
  Var f_hat = ops::add(ops::mul(f, overlap), ops::sub(master_f, overlap));
  Var i_hat = ops::add(ops::mul(i, overlap), ops::sub(master_i, overlap));
  Var c = ops::add(ops::mul(f_hat, prev_c), ops::mul(i_hat, candidate));
  return {f_hat, i_hat, c};
}

}  // namespace

Var cumax(Var logits) { return ops::cumax(logits); }

BoundCell bind(Tape& tape, const CellParams& params, const Tensor* recurrent_mask) {
  std::vector<Var> w, u, b;
  for (std::size_t k = 0; k < params.gate_count(); ++k) {
    const GateParams& g = params.gate(static_cast<Gate>(k));
    w.push_back(tape.parameter(g.input_weight));
    u.push_back(tape.parameter(g.recurrent_weight));
    b.push_back(tape.parameter(g.bias));
  }
  BoundCell bound;
  bound.params = &params;
  bound.input_weight = ops::concat_rows(w);
  bound.recurrent_weight = ops::concat_rows(u);
  if (recurrent_mask) {
    bound.recurrent_weight = ops::mul(bound.recurrent_weight, tape.constant(*recurrent_mask));
  }
  bound.bias = ops::concat_cols(b);
  return bound;
}

StateVars zero_state(Tape& tape, std::size_t batch, std::size_t hidden_size) {
  return {tape.constant(Tensor({batch, hidden_size})), tape.constant(Tensor({batch, hidden_size}))};
}

StepVars step(Tape& tape, const BoundCell& cell, Var input_projection, const StateVars& prev,
              const StepOptions& options) {
  const CellParams& p = *cell.params;
  const std::size_t d = p.hidden_size();
  const std::size_t batch = input_projection.value().rows();
  if (input_projection.value().cols() != p.fused_size() || prev.h.value().rows() != batch ||
      prev.h.value().cols() != d || prev.c.shape() != prev.h.shape()) {
    throw DimensionError("cell step: projection " + shape_string(input_projection.shape()) +
                         " and state " + shape_string(prev.h.shape()) + " do not fit a cell with " +
                         std::to_string(p.fused_size()) + " gate rows and hidden size " +
                         std::to_string(d));
  }
  Var pre = ops::add(input_projection, ops::matmul_nt(prev.h, cell.recurrent_weight));
  Var f = ops::sigmoid(ops::slice_cols(pre, 0, d));
  Var i = ops::sigmoid(ops::slice_cols(pre, d, d));
  Var o = ops::sigmoid(ops::slice_cols(pre, 2 * d, d));
  Var candidate = ops::tanh(ops::slice_cols(pre, 3 * d, d));

  StepVars out;
  Var c;
  if (p.kind() == CellKind::kLstm) {
    c = ops::add(ops::mul(f, prev.c), ops::mul(i, candidate));
  } else {
    const std::size_t m = p.master_size();
    Var master_f, master_i;
    if (options.forced_masters) {
      const auto& forced = *options.forced_masters;
      if (forced.master_forget.size() != batch * m || forced.master_input.size() != batch * m) {
        throw DimensionError("forced master gates must have " + std::to_string(m) + " entries per row");
      }
      master_f = tape.constant(forced.master_forget.reshaped({batch, m}));
      master_i = tape.constant(forced.master_input.reshaped({batch, m}));
    } else {
      master_f = cumax(ops::slice_cols(pre, 4 * d, m));
      master_i = ops::affine(cumax(ops::slice_cols(pre, 4 * d + m, m)), -1.0, 1.0);
    }
    const std::size_t chunk = p.chunk_factor();
    UpdateVars u = structured(f, i, ops::repeat_cols(master_f, chunk), ops::repeat_cols(master_i, chunk),
                              prev.c, candidate);
    c = u.cell;
    out.master_forget = master_f;
    out.master_input = master_i;
  }
  out.state = {ops::mul(o, ops::tanh(c)), c};
  return out;
}

LayerRun run(Tape& tape, const BoundCell& cell, Var inputs, std::size_t steps, std::size_t batch,
             const StateVars& initial, const std::vector<Tensor>* step_masks) {
  if (inputs.value().rows() != steps * batch) {
    throw DimensionError("layer run: input block " + shape_string(inputs.shape()) + " is not " +
                         std::to_string(steps) + " steps of " + std::to_string(batch) + " rows");
  }
  if (step_masks && step_masks->size() != steps) {
    throw DimensionError("layer run: need one mask per step");
  }
  Var projection = ops::add_row(ops::matmul_nt(inputs, cell.input_weight), cell.bias);
  LayerRun result;
  result.outputs.reserve(steps);
  StateVars state = initial;
  for (std::size_t t = 0; t < steps; ++t) {
    Var x_t = steps == 1 ? projection : ops::slice_rows(projection, t * batch, batch);
    StepVars s = step(tape, cell, x_t, state);
    if (step_masks) {
      const Tensor& keep_new = (*step_masks)[t];
      Tensor keep_old = keep_new;
      for (double& v : keep_old.values()) v = 1.0 - v;
      Var m_new = tape.constant(keep_new);
      Var m_old = tape.constant(std::move(keep_old));
      s.state.h = ops::add(ops::mul(m_new, s.state.h), ops::mul(m_old, state.h));
      s.state.c = ops::add(ops::mul(m_new, s.state.c), ops::mul(m_old, state.c));
    }
    state = s.state;
    result.outputs.push_back(state.h);
    if (s.master_forget.valid()) {
      result.master_forget.push_back(s.master_forget);
      result.master_input.push_back(s.master_input);
    }
  }
  result.final_state = state;
  return result;
}

}  // namespace cell

namespace {

cell::StepVars single_step(Tape& tape, const CellParams& params, const Tensor& x,
                           const CellState& prev, const StepOptions& options) {
  if (x.size() != params.input_size()) {
    throw DimensionError("input " + shape_string(x.shape()) + " does not match cell input size " +
                         std::to_string(params.input_size()));
  }
  if (prev.h.size() != params.hidden_size() || prev.c.size() != params.hidden_size()) {
    throw DimensionError("state " + shape_string(prev.h.shape()) + "/" + shape_string(prev.c.shape()) +
                         " does not match hidden size " + std::to_string(params.hidden_size()));
  }
  require_finite(prev.c, "previous cell state");
  const cell::BoundCell bound = cell::bind(tape, params);
  Var xv = tape.constant(x.reshaped({1, x.size()}));
  Var projection = ops::add_row(ops::matmul_nt(xv, bound.input_weight), bound.bias);
  cell::StateVars state{tape.constant(prev.h.reshaped({1, prev.h.size()})),
                        tape.constant(prev.c.reshaped({1, prev.c.size()}))};
  return cell::step(tape, bound, projection, state, options);
}

}  // namespace

std::pair<CellState, StepTrace> onlstm_step(const CellParams& params, const Tensor& x,
                                            const CellState& prev, const StepOptions& options) {
  if (params.kind() != CellKind::kOnLstm) {
    throw UnsupportedModelError("onlstm_step needs ON-LSTM parameters");
  }
  Tape tape(Tape::Mode::kInference);
  const cell::StepVars s = single_step(tape, params, x, prev, options);
  const std::size_t d = params.hidden_size();
  const std::size_t m = params.master_size();
  CellState next{s.state.h.value().reshaped({d}), s.state.c.value().reshaped({d})};
  StepTrace trace{s.master_forget.value().reshaped({m}), s.master_input.value().reshaped({m}), 0.0};
  trace.split_estimate = split_estimate(trace.master_forget.values());
  return {std::move(next), std::move(trace)};
}

CellState lstm_step(const CellParams& params, const Tensor& x, const CellState& prev) {
  // Rebuild a four-gate view so an ON-LSTM parameter set can also be stepped
  // as a plain LSTM.
  Tape tape(Tape::Mode::kInference);
  const std::size_t d = params.hidden_size();
  if (x.size() != params.input_size() || prev.h.size() != d || prev.c.size() != d) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) + " or state " +
                         shape_string(prev.h.shape()) + " does not match the cell");
  }
  require_finite(prev.c, "previous cell state");
  std::vector<Var> w, u, b;
  for (std::size_t k = 0; k < 4; ++k) {
    const GateParams& g = params.gate(static_cast<Gate>(k));
    w.push_back(tape.parameter(g.input_weight));
    u.push_back(tape.parameter(g.recurrent_weight));
    b.push_back(tape.parameter(g.bias));
  }
  Var xv = tape.constant(x.reshaped({1, x.size()}));
  Var hv = tape.constant(prev.h.reshaped({1, d}));
  Var cv = tape.constant(prev.c.reshaped({1, d}));
  Var pre = ops::add_row(ops::add(ops::matmul_nt(xv, ops::concat_rows(w)),
                                  ops::matmul_nt(hv, ops::concat_rows(u))),
                         ops::concat_cols(b));
  Var f = ops::sigmoid(ops::slice_cols(pre, 0, d));
  Var i = ops::sigmoid(ops::slice_cols(pre, d, d));
  Var o = ops::sigmoid(ops::slice_cols(pre, 2 * d, d));
  Var g = ops::tanh(ops::slice_cols(pre, 3 * d, d));
  Var c = ops::add(ops::mul(f, cv), ops::mul(i, g));
  Var h = ops::mul(o, ops::tanh(c));
  return {h.value().reshaped({d}), c.value().reshaped({d})};
}

StructuredUpdate structured_update(const Tensor& forget, const Tensor& input,
                                   const Tensor& master_forget, const Tensor& master_input,
                                   const Tensor& prev_cell, const Tensor& candidate) {
  Tape tape(Tape::Mode::kInference);
  auto u = cell::structured(tape.constant(forget), tape.constant(input), tape.constant(master_forget),
                            tape.constant(master_input), tape.constant(prev_cell),
                            tape.constant(candidate));
  return {u.forget.value(), u.input.value(), u.cell.value()};
}

}  // namespace onlstm
