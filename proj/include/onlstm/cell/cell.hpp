#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "onlstm/numerics/rng.hpp"
#include "onlstm/numerics/tape.hpp"

namespace onlstm {

enum class CellKind { kOnLstm, kLstm };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view text);  // "onlstm" | "lstm"

// Gate blocks in the order they are stacked inside the fused pre-activation.
enum class Gate : std::size_t {
  kForget = 0,
  kInput,
  kOutput,
  kCandidate,
  kMasterForget,
  kMasterInput,
};

struct GateParams {
  Parameter input_weight;      // [out x input_size]
  Parameter recurrent_weight;  // [out x hidden_size]
  Parameter bias;              // [out]
};

// Weights of one recurrent layer. An ON-LSTM layer carries six gate blocks, a
// baseline LSTM layer the first four; the master blocks have hidden/C rows.
class CellParams {
 public:
  CellParams(CellKind kind, std::size_t input_size, std::size_t hidden_size,
             std::size_t chunk_factor, const std::string& name_prefix);

  // W and U uniform in [-1/sqrt(D), 1/sqrt(D)], biases zero except the master
  // forget bias, which starts at +1.
  void initialize(Rng& rng);

  CellKind kind() const noexcept { return kind_; }
  std::size_t input_size() const noexcept { return input_size_; }
  std::size_t hidden_size() const noexcept { return hidden_size_; }
  std::size_t chunk_factor() const noexcept { return chunk_factor_; }
  std::size_t master_size() const noexcept { return hidden_size_ / chunk_factor_; }
  std::size_t gate_count() const noexcept { return gates_.size(); }
  // Rows of the fused pre-activation: 4D, plus 2*D_m for ON-LSTM.
  std::size_t fused_size() const noexcept;

  GateParams& gate(Gate g);
  const GateParams& gate(Gate g) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  CellKind kind_;
  std::size_t input_size_;
  std::size_t hidden_size_;
  std::size_t chunk_factor_;
  std::vector<GateParams> gates_;
};

struct CellState {
  Tensor h;
  Tensor c;

  static CellState zeros(std::size_t hidden_size);
};

struct StepTrace {
  Tensor master_forget;    // [D_m], non-decreasing
  Tensor master_input;     // [D_m], non-increasing
  double split_estimate;   // D_m - sum(master_forget)
};

// cumsum(softmax(logits)) along the last axis.
Tensor cumax(const Tensor& logits);
// Repeats each entry `chunk_factor` times in place: [a, b], 2 -> [a, a, b, b].
Tensor expand_chunks(const Tensor& master, std::size_t chunk_factor);
// D_m - sum_k master_forget[k] for a single gate vector.
double split_estimate(std::span<const double> master_forget);

// Master gates given directly instead of computed from the weights. Values are
// pre-expansion (D_m entries each).
struct ForcedMasters {
  Tensor master_forget;
  Tensor master_input;
};

struct StepOptions {
  std::optional<ForcedMasters> forced_masters;
};

// Single-vector steps (x: [input_size], state vectors: [D]).
std::pair<CellState, StepTrace> onlstm_step(const CellParams& params, const Tensor& x,
                                            const CellState& prev, const StepOptions& options = {});
// Standard LSTM update using only the f, i, o and candidate blocks of `params`.
CellState lstm_step(const CellParams& params, const Tensor& x, const CellState& prev);

// Result of the structured update for given gates (all [D], masters already
// expanded).
struct StructuredUpdate {
  Tensor forget;  // f-hat
  Tensor input;   // i-hat
  Tensor cell;    // c_t
};
StructuredUpdate structured_update(const Tensor& forget, const Tensor& input,
                                   const Tensor& master_forget, const Tensor& master_input,
                                   const Tensor& prev_cell, const Tensor& candidate);

// ---- tape-level interface used by the models ----

namespace cell {

struct StateVars {
  Var h;
  Var c;
};

// A layer's weights placed on a tape once per forward pass: the gate blocks
// fused row-wise so each step needs a single recurrent product.
struct BoundCell {
  const CellParams* params = nullptr;
  Var input_weight;      // [G x input_size]
  Var recurrent_weight;  // [G x D], optionally masked
  Var bias;              // [G]
};

// `recurrent_mask`, if given, multiplies the fused recurrent matrix
// elementwise (shape [G x D]).
BoundCell bind(Tape& tape, const CellParams& params, const Tensor* recurrent_mask = nullptr);

Var cumax(Var logits);

struct StepVars {
  StateVars state;
  Var master_forget;  // [B x D_m]; unset for LSTM cells
  Var master_input;
};

// One step for a batch. `input_projection` is x W^T + b for this step
// ([B x G]).
StepVars step(Tape& tape, const BoundCell& cell, Var input_projection, const StateVars& prev,
              const StepOptions& options = {});

struct LayerRun {
  std::vector<Var> outputs;         // h per step, [B x D] each
  StateVars final_state;
  std::vector<Var> master_forget;   // per step, ON-LSTM only
  std::vector<Var> master_input;
};

// Runs the layer over a time-major input block [T*B x input_size] (rows t*B ..
// t*B+B-1 hold step t). When `step_masks` is given, row b keeps its previous
// state at step t wherever step_masks[t] is 0 (shape [B x D]); this lets
// sequences of different lengths share a batch.
LayerRun run(Tape& tape, const BoundCell& cell, Var inputs, std::size_t steps, std::size_t batch,
             const StateVars& initial, const std::vector<Tensor>* step_masks = nullptr);

StateVars zero_state(Tape& tape, std::size_t batch, std::size_t hidden_size);

}  // namespace cell
}  // namespace onlstm
