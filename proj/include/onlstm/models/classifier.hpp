#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "onlstm/models/language_model.hpp"

namespace onlstm {

inline constexpr std::size_t kRelationCount = 7;

struct ClassifierConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_size = 64;
  std::vector<std::size_t> hidden_sizes{64};
  std::size_t chunk_factor = 8;
  CellKind cell = CellKind::kOnLstm;
  std::size_t mlp_size = 128;
  DropoutRates dropout;

  void validate() const;
};

// Sentence-pair classifier: both sentences go through one shared encoder, the
// features (h1, h2, h1*h2, |h1-h2|) feed a ReLU layer and a 7-way output.
class InferenceClassifier {
 public:
  explicit InferenceClassifier(const ClassifierConfig& config);

  void initialize(Rng& rng);

  const ClassifierConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  std::size_t feature_size() const { return 4 * encoder_.top_size(); }

  Parameter& hidden_weight() { return hidden_weight_; }
  Parameter& hidden_bias() { return hidden_bias_; }
  Parameter& output_weight() { return output_weight_; }
  Parameter& output_bias() { return output_bias_; }
  const Parameter& hidden_weight() const { return hidden_weight_; }
  const Parameter& hidden_bias() const { return hidden_bias_; }
  const Parameter& output_weight() const { return output_weight_; }
  const Parameter& output_bias() const { return output_bias_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  ClassifierConfig config_;
  Encoder encoder_;
  Parameter hidden_weight_;  // [mlp x 4H]
  Parameter hidden_bias_;
  Parameter output_weight_;  // [7 x mlp]
  Parameter output_bias_;
};

// Top-layer h after the last token, evaluation mode.
Tensor encode_sentence(const InferenceClassifier& classifier, std::span<const int> tokens);

// Probabilities over the seven relations.
Tensor classify_pair(const InferenceClassifier& classifier, std::span<const int> s1,
                     std::span<const int> s2);

struct SentencePair {
  std::span<const int> first;
  std::span<const int> second;
};

// Evaluation-mode feature vector (h1, h2, h1*h2, |h1-h2|), length 4H.
Tensor pair_features(const InferenceClassifier& classifier, std::span<const int> s1,
                     std::span<const int> s2);

// Logits [pairs x 7] for a batch, recorded on `tape`.
Var classifier_logits(Tape& tape, const InferenceClassifier& classifier,
                      const std::vector<SentencePair>& pairs, Rng* dropout_rng);

// Probabilities for many pairs at once (evaluation mode), one [7] row each.
std::vector<Tensor> classify_pairs(const InferenceClassifier& classifier,
                                   const std::vector<SentencePair>& pairs);

}  // namespace onlstm
