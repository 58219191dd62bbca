#include "onlstm/models/classifier.hpp"

#include <cmath>
#include <string>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/ops.hpp"

namespace onlstm {
namespace {

void uniform_fill(Parameter& p, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
  for (double& v : p.value.values()) v = rng.uniform(-bound, bound);
}

Var maybe_dropout(Tape& tape, Var x, double rate, Rng* rng) {
  if (!rng || rate == 0.0) return x;
  return ops::mul(x, tape.constant(dropout_mask(x.shape(), rate, *rng)));
}

// Evaluation batches are capped so padding stays bounded on large test sets.
constexpr std::size_t kEvalBatch = 256;

}  // namespace

void ClassifierConfig::validate() const {
  if (mlp_size == 0) throw ConfigError("mlp_size must be positive");
  dropout.validate();
}

InferenceClassifier::InferenceClassifier(const ClassifierConfig& config)
    : config_((config.validate(), config)),
      encoder_(config.vocab_size, config.embed_size, config.hidden_sizes, config.chunk_factor, config.cell),
      hidden_weight_("classifier.hidden.W", Tensor({config.mlp_size, 4 * config.hidden_sizes.back()})),
      hidden_bias_("classifier.hidden.b", Tensor({config.mlp_size})),
      output_weight_("classifier.out.W", Tensor({kRelationCount, config.mlp_size})),
      output_bias_("classifier.out.b", Tensor({kRelationCount})) {}

void InferenceClassifier::initialize(Rng& rng) {
  encoder_.initialize(rng);
  uniform_fill(hidden_weight_, rng);
  uniform_fill(output_weight_, rng);
  hidden_bias_.value.fill(0.0);
  output_bias_.value.fill(0.0);
}

std::vector<Parameter*> InferenceClassifier::parameters() {
  auto out = encoder_.parameters();
  for (Parameter* p : {&hidden_weight_, &hidden_bias_, &output_weight_, &output_bias_}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> InferenceClassifier::parameters() const {
  auto out = encoder_.parameters();
  for (const Parameter* p : {&hidden_weight_, &hidden_bias_, &output_weight_, &output_bias_}) {
    out.push_back(p);
  }
  return out;
}

namespace {

// (h1, h2, h1*h2, |h1-h2|) for each pair, [pairs x 4H].
Var pair_feature_block(Tape& tape, const InferenceClassifier& classifier,
                       const std::vector<SentencePair>& pairs, Rng* dropout_rng) {
  if (pairs.empty()) throw ContractError("classifier needs at least one pair");
  std::vector<std::span<const int>> rows;
  rows.reserve(2 * pairs.size());
  for (const auto& p : pairs) rows.push_back(p.first);
  for (const auto& p : pairs) rows.push_back(p.second);
  for (const auto& r : rows) {
    if (r.empty()) throw ContractError("cannot classify an empty sentence");
  }
  const EncoderRun run = encode_batch(tape, classifier.encoder(), SequenceBatch::from(rows),
                                      classifier.config().dropout, dropout_rng);
  const std::size_t n = pairs.size();
  Var h = run.layers.back().final_state.h;
  Var h1 = ops::slice_rows(h, 0, n);
  Var h2 = ops::slice_rows(h, n, n);
  return ops::concat_cols({h1, h2, ops::mul(h1, h2), ops::abs(ops::sub(h1, h2))});
}

}  // namespace

Var classifier_logits(Tape& tape, const InferenceClassifier& classifier,
                      const std::vector<SentencePair>& pairs, Rng* dropout_rng) {
  const DropoutRates& rates = classifier.config().dropout;
  Var features = pair_feature_block(tape, classifier, pairs, dropout_rng);
  features = maybe_dropout(tape, features, rates.output, dropout_rng);
  Var hidden = ops::relu(ops::add_row(ops::matmul_nt(features, tape.parameter(classifier.hidden_weight())),
                                      tape.parameter(classifier.hidden_bias())));
  hidden = maybe_dropout(tape, hidden, rates.hidden, dropout_rng);
  return ops::add_row(ops::matmul_nt(hidden, tape.parameter(classifier.output_weight())),
                      tape.parameter(classifier.output_bias()));
}

Tensor pair_features(const InferenceClassifier& classifier, std::span<const int> s1,
                     std::span<const int> s2) {
  Tape tape(Tape::Mode::kInference);
  const Tensor& f = pair_feature_block(tape, classifier, {{s1, s2}}, nullptr).value();
  return f.reshaped({f.size()});
}

std::vector<Tensor> classify_pairs(const InferenceClassifier& classifier,
                                   const std::vector<SentencePair>& pairs) {
  std::vector<Tensor> out;
  out.reserve(pairs.size());
  for (std::size_t begin = 0; begin < pairs.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(pairs.size(), begin + kEvalBatch);
    Tape tape(Tape::Mode::kInference);
    const std::vector<SentencePair> chunk(pairs.begin() + begin, pairs.begin() + end);
    const Tensor probs = softmax_rows(classifier_logits(tape, classifier, chunk, nullptr).value());
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const auto row = probs.row(r);
      out.push_back(Tensor::vector({row.begin(), row.end()}));
    }
  }
  return out;
}

Tensor classify_pair(const InferenceClassifier& classifier, std::span<const int> s1, std::span<const int> s2) {
  return classify_pairs(classifier, {{s1, s2}}).front();
}

Tensor encode_sentence(const InferenceClassifier& classifier, std::span<const int> tokens) {
  if (tokens.empty()) throw ContractError("cannot encode an empty sentence");
  Tape tape(Tape::Mode::kInference);
  const EncoderRun run = encode_batch(tape, classifier.encoder(), SequenceBatch::from({tokens}),
                                      classifier.config().dropout, nullptr);
  const Tensor& h = run.layers.back().final_state.h.value();
  return h.reshaped({h.size()});
}

}  // namespace onlstm
