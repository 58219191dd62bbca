#include "onlstm/models/language_model.hpp"

#include <cmath>
#include <string>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/ops.hpp"
#include "onlstm/numerics/parallel.hpp"

namespace onlstm {
namespace {

void check_rate(double rate, const char* name) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError(std::string("dropout rate '") + name + "' must be in [0, 1), got " +
                      std::to_string(rate));
  }
}

void check_sizes(std::size_t vocab_size, std::size_t embed_size, const std::vector<std::size_t>& hidden,
                 std::size_t chunk_factor, CellKind kind) {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (embed_size == 0) throw ConfigError("embed_size must be positive");
  if (hidden.empty()) throw ConfigError("at least one recurrent layer is required");
  if (chunk_factor == 0) throw ConfigError("chunk_factor must be positive");
  for (std::size_t d : hidden) {
    if (d == 0) throw ConfigError("hidden sizes must be positive");
    if (kind == CellKind::kOnLstm && d % chunk_factor != 0) {
      throw ConfigError("hidden size " + std::to_string(d) + " is not divisible by chunk_factor " +
                        std::to_string(chunk_factor));
    }
  }
}

// Per-step [B x D] masks that freeze rows whose sequence has ended.
std::vector<Tensor> length_masks(const SequenceBatch& batch, std::size_t hidden) {
  std::vector<Tensor> masks;
  masks.reserve(batch.steps);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    Tensor m({batch.batch, hidden});
    for (std::size_t b = 0; b < batch.batch; ++b) {
      if (t < batch.lengths[b]) {
        for (std::size_t j = 0; j < hidden; ++j) m.at(b, j) = 1.0;
      }
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

Var maybe_dropout(Tape& tape, Var x, double rate, Rng* rng) {
  if (!rng || rate == 0.0) return x;
  return ops::mul(x, tape.constant(dropout_mask(x.shape(), rate, *rng)));
}

Var decode(Tape& tape, const LanguageModel& model, Var hidden) {
  return ops::add_row(ops::matmul_nt(hidden, tape.parameter(model.decoder_weight())),
                      tape.parameter(model.decoder_bias()));
}

struct EvalPass {
  Tensor logits;  // [T x V]
  std::vector<CellState> final_states;
  std::vector<std::vector<StepTrace>> traces;
};

// Single-sentence evaluation pass; `tokens` must be non-empty.
EvalPass eval_pass(const LanguageModel& model, std::span<const int> tokens,
                   const std::vector<CellState>* initial, bool want_traces) {
  const Encoder& enc = model.encoder();
  Tape tape(Tape::Mode::kInference);
  std::vector<cell::StateVars> init;
  if (initial) {
    for (std::size_t l = 0; l < enc.layer_count(); ++l) {
      const std::size_t d = enc.layer(l).hidden_size();
      init.push_back({tape.constant((*initial)[l].h.reshaped({1, d})),
                      tape.constant((*initial)[l].c.reshaped({1, d}))});
    }
  }
  const SequenceBatch batch = SequenceBatch::from({tokens});
  const EncoderRun run = encode_batch(tape, enc, batch, model.config().dropout, nullptr,
                                      initial ? &init : nullptr);
  const auto& top = run.layers.back();
  EvalPass out;
  Var hidden = top.outputs.size() == 1 ? top.outputs[0] : ops::concat_rows(top.outputs);
  out.logits = decode(tape, model, hidden).value();
  for (const auto& layer : run.layers) {
    const std::size_t d = layer.final_state.h.value().cols();
    out.final_states.push_back({layer.final_state.h.value().reshaped({d}),
                                layer.final_state.c.value().reshaped({d})});
  }
  if (want_traces && enc.kind() == CellKind::kOnLstm) {
    for (const auto& layer : run.layers) {
      std::vector<StepTrace> steps;
      for (std::size_t t = 0; t < layer.master_forget.size(); ++t) {
        const Tensor& mf = layer.master_forget[t].value();
        StepTrace trace{mf.reshaped({mf.size()}),
                        layer.master_input[t].value().reshaped({mf.size()}), 0.0};
        trace.split_estimate = split_estimate(trace.master_forget.values());
        steps.push_back(std::move(trace));
      }
      out.traces.push_back(std::move(steps));
    }
  }
  return out;
}

}  // namespace

void DropoutRates::validate() const {
  check_rate(input, "input");
  check_rate(hidden, "hidden");
  check_rate(output, "output");
  check_rate(weight, "weight");
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  Tensor mask(shape);
  const double keep = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

void check_token_ids(std::span<const int> tokens, std::size_t vocab_size) {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= vocab_size) {
      throw VocabularyError("token id " + std::to_string(tokens[t]) + " at position " + std::to_string(t) +
                            " is outside the vocabulary of " + std::to_string(vocab_size));
    }
  }
}

// ---- Encoder ----

Encoder::Encoder(std::size_t vocab_size, std::size_t embed_size, const std::vector<std::size_t>& hidden_sizes,
                 std::size_t chunk_factor, CellKind kind) {
  check_sizes(vocab_size, embed_size, hidden_sizes, chunk_factor, kind);
  embedding_ = Parameter("embedding", Tensor({vocab_size, embed_size}));
  std::size_t in = embed_size;
  for (std::size_t l = 0; l < hidden_sizes.size(); ++l) {
    layers_.emplace_back(kind, in, hidden_sizes[l], chunk_factor, "layer" + std::to_string(l));
    in = hidden_sizes[l];
  }
}

void Encoder::initialize(Rng& rng) {
  for (double& v : embedding_.value.values()) v = rng.uniform(-0.1, 0.1);
  for (auto& layer : layers_) layer.initialize(rng);
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out{&embedding_};
  for (auto& layer : layers_) {
    for (Parameter* p : layer.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> Encoder::parameters() const {
  std::vector<const Parameter*> out{&embedding_};
  for (const auto& layer : layers_) {
    for (const Parameter* p : layer.parameters()) out.push_back(p);
  }
  return out;
}

// ---- batches ----

SequenceBatch SequenceBatch::from(const std::vector<std::span<const int>>& rows) {
  SequenceBatch b;
  b.batch = rows.size();
  for (const auto& r : rows) {
    if (r.empty()) throw ContractError("sequence batch rows must be non-empty");
    b.steps = std::max(b.steps, r.size());
    b.lengths.push_back(r.size());
  }
  b.inputs.assign(b.steps * b.batch, kEosId);
  for (std::size_t row = 0; row < rows.size(); ++row) {
    for (std::size_t t = 0; t < rows[row].size(); ++t) b.inputs[t * b.batch + row] = rows[row][t];
  }
  return b;
}

bool SequenceBatch::ragged() const {
  for (std::size_t len : lengths) {
    if (len != steps) return true;
  }
  return false;
}

EncoderRun encode_batch(Tape& tape, const Encoder& encoder, const SequenceBatch& batch,
                        const DropoutRates& rates, Rng* dropout_rng,
                        const std::vector<cell::StateVars>* initial) {
  if (batch.batch == 0 || batch.steps == 0) throw ContractError("cannot encode an empty batch");
  check_token_ids(batch.inputs, encoder.vocab_size());
  if (initial && initial->size() != encoder.layer_count()) {
    throw DimensionError("need one initial state per layer (" + std::to_string(encoder.layer_count()) + ")");
  }
  Var x = ops::gather_rows(tape.parameter(encoder.embedding()), batch.inputs);
  x = maybe_dropout(tape, x, rates.input, dropout_rng);
  const bool ragged = batch.ragged();
  EncoderRun run;
  for (std::size_t l = 0; l < encoder.layer_count(); ++l) {
    const CellParams& params = encoder.layer(l);
    Tensor weight_mask;
    if (dropout_rng && rates.weight > 0.0) {
      weight_mask = dropout_mask({params.fused_size(), params.hidden_size()}, rates.weight, *dropout_rng);
    }
    const cell::BoundCell bound = cell::bind(tape, params, weight_mask.size() ? &weight_mask : nullptr);
    const cell::StateVars start =
        initial ? (*initial)[l] : cell::zero_state(tape, batch.batch, params.hidden_size());
    std::vector<Tensor> masks;
    if (ragged) masks = length_masks(batch, params.hidden_size());
    run.layers.push_back(cell::run(tape, bound, x, batch.steps, batch.batch, start, ragged ? &masks : nullptr));
    if (l + 1 < encoder.layer_count()) {
      const auto& outs = run.layers.back().outputs;
      x = outs.size() == 1 ? outs[0] : ops::concat_rows(outs);
      x = maybe_dropout(tape, x, rates.hidden, dropout_rng);
    }
  }
  return run;
}

// ---- language model ----

void LanguageModelConfig::validate() const {
  check_sizes(vocab_size, embed_size, hidden_sizes, chunk_factor, cell);
  if (tie_weights && hidden_sizes.back() != embed_size) {
    throw ConfigError("tied weights need the last hidden size (" + std::to_string(hidden_sizes.back()) +
                      ") to equal embed_size (" + std::to_string(embed_size) + ")");
  }
  dropout.validate();
}

LanguageModel::LanguageModel(const LanguageModelConfig& config)
    : config_((config.validate(), config)),
      encoder_(config.vocab_size, config.embed_size, config.hidden_sizes, config.chunk_factor, config.cell),
      decoder_bias_("decoder.b", Tensor({config.vocab_size})) {
  if (!config.tie_weights) {
    decoder_ = Parameter("decoder.W", Tensor({config.vocab_size, config.hidden_sizes.back()}));
  }
}

void LanguageModel::initialize(Rng& rng) {
  encoder_.initialize(rng);
  if (!config_.tie_weights) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(decoder_.value.cols()));
    for (double& v : decoder_.value.values()) v = rng.uniform(-bound, bound);
  }
  decoder_bias_.value.fill(0.0);
}

std::vector<Parameter*> LanguageModel::parameters() {
  auto out = encoder_.parameters();
  if (!config_.tie_weights) out.push_back(&decoder_);
  out.push_back(&decoder_bias_);
  return out;
}

std::vector<const Parameter*> LanguageModel::parameters() const {
  auto out = encoder_.parameters();
  if (!config_.tie_weights) out.push_back(&decoder_);
  out.push_back(&decoder_bias_);
  return out;
}

LmOutput lm_forward(const LanguageModel& model, std::span<const int> tokens,
                    const std::vector<CellState>* initial) {
  const Encoder& enc = model.encoder();
  check_token_ids(tokens, enc.vocab_size());
  if (initial && initial->size() != enc.layer_count()) {
    throw DimensionError("need one initial state per layer (" + std::to_string(enc.layer_count()) + ")");
  }
  LmOutput out;
  if (tokens.empty()) {
    if (initial) {
      out.final_states = *initial;
    } else {
      for (std::size_t l = 0; l < enc.layer_count(); ++l) {
        out.final_states.push_back(CellState::zeros(enc.layer(l).hidden_size()));
      }
    }
    if (enc.kind() == CellKind::kOnLstm) out.traces.resize(enc.layer_count());
    return out;
  }
  EvalPass pass = eval_pass(model, tokens, initial, true);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto row = pass.logits.row(t);
    out.logits.push_back(Tensor::vector({row.begin(), row.end()}));
  }
  out.final_states = std::move(pass.final_states);
  out.traces = std::move(pass.traces);
  return out;
}

double sentence_logprob(const LanguageModel& model, std::span<const int> tokens, bool score_eos) {
  if (tokens.empty()) throw ContractError("sentence_logprob needs a non-empty sentence");
  check_token_ids(tokens, model.encoder().vocab_size());
  std::vector<int> inputs{kBosId};
  inputs.insert(inputs.end(), tokens.begin(), tokens.end() - (score_eos ? 0 : 1));
  std::vector<int> targets(tokens.begin(), tokens.end());
  if (score_eos) targets.push_back(kEosId);
  check_token_ids(targets, model.encoder().vocab_size());
  const Tensor logp = log_softmax_rows(eval_pass(model, inputs, nullptr, false).logits);
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) total += logp.at(t, static_cast<std::size_t>(targets[t]));
  return total;
}

double perplexity(const LanguageModel& model, const std::vector<std::vector<int>>& corpus) {
  if (corpus.empty()) throw ContractError("perplexity needs a non-empty corpus");
  const auto scores =
      parallel_map(corpus.size(), [&](std::size_t i) { return sentence_logprob(model, corpus[i], true); });
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    total += scores[i];
    count += corpus[i].size() + 1;
  }
  return std::exp(-total / static_cast<double>(count));
}

LmLoss lm_batch_loss(Tape& tape, const LanguageModel& model,
                     const std::vector<std::span<const int>>& sentences, Rng* dropout_rng) {
  if (sentences.empty()) throw ContractError("lm_batch_loss needs at least one sentence");
  std::vector<std::vector<int>> inputs;
  inputs.reserve(sentences.size());
  for (const auto& s : sentences) {
    if (s.empty()) throw ContractError("training sentences must be non-empty");
    std::vector<int> in{kBosId};
    in.insert(in.end(), s.begin(), s.end());
    inputs.push_back(std::move(in));
  }
  const SequenceBatch batch =
      SequenceBatch::from(std::vector<std::span<const int>>(inputs.begin(), inputs.end()));
  const EncoderRun run = encode_batch(tape, model.encoder(), batch, model.config().dropout, dropout_rng);
  const auto& outs = run.layers.back().outputs;
  Var top = outs.size() == 1 ? outs[0] : ops::concat_rows(outs);
  top = maybe_dropout(tape, top, model.config().dropout.output, dropout_rng);

  std::vector<int> rows, targets;
  for (std::size_t t = 0; t < batch.steps; ++t) {
    for (std::size_t b = 0; b < batch.batch; ++b) {
      if (t >= batch.lengths[b]) continue;
      rows.push_back(static_cast<int>(t * batch.batch + b));
      targets.push_back(t + 1 < batch.lengths[b] ? sentences[b][t] : kEosId);
    }
  }
  check_token_ids(targets, model.encoder().vocab_size());
  Var logits = decode(tape, model, ops::gather_rows(top, rows));
  return {ops::cross_entropy(logits, targets), targets.size()};
}

}  // namespace onlstm
