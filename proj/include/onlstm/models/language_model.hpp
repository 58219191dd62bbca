#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "onlstm/cell/cell.hpp"
#include "onlstm/numerics/rng.hpp"
#include "onlstm/numerics/tape.hpp"

namespace onlstm {

// Reserved vocabulary ids shared by every corpus and model.
inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr std::size_t kReservedTokens = 3;

struct DropoutRates {
  double input = 0.0;   // on embeddings
  double hidden = 0.0;  // between recurrent layers
  double output = 0.0;  // on the top layer before the decoder / classifier
  double weight = 0.0;  // fixed mask on recurrent matrices, one draw per batch

  void validate() const;
};

// Embedding followed by a stack of recurrent layers.
class Encoder {
 public:
  Encoder(std::size_t vocab_size, std::size_t embed_size, const std::vector<std::size_t>& hidden_sizes,
          std::size_t chunk_factor, CellKind kind);

  void initialize(Rng& rng);

  std::size_t vocab_size() const { return embedding_.value.rows(); }
  std::size_t embed_size() const { return embedding_.value.cols(); }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t top_size() const { return layers_.back().hidden_size(); }
  CellKind kind() const { return layers_.front().kind(); }

  Parameter& embedding() { return embedding_; }
  const Parameter& embedding() const { return embedding_; }
  CellParams& layer(std::size_t l) { return layers_.at(l); }
  const CellParams& layer(std::size_t l) const { return layers_.at(l); }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  Parameter embedding_;
  std::vector<CellParams> layers_;
};

// Sequences laid out time-major: inputs[t * batch + b] is token t of row b.
// Rows shorter than `steps` are padded and masked.
struct SequenceBatch {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::vector<int> inputs;
  std::vector<std::size_t> lengths;

  static SequenceBatch from(const std::vector<std::span<const int>>& rows);
  bool ragged() const;
};

struct EncoderRun {
  std::vector<cell::LayerRun> layers;
};

// Dropout is applied only when `dropout_rng` is non-null. `initial` holds one
// state per layer; zeros when absent.
EncoderRun encode_batch(Tape& tape, const Encoder& encoder, const SequenceBatch& batch,
                        const DropoutRates& rates, Rng* dropout_rng,
                        const std::vector<cell::StateVars>* initial = nullptr);

// Inverted dropout mask: entries are 0 with probability `rate`, otherwise
// 1/(1-rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);

struct LanguageModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_size = 64;
  std::vector<std::size_t> hidden_sizes{64, 64};
  std::size_t chunk_factor = 8;
  CellKind cell = CellKind::kOnLstm;
  bool tie_weights = true;
  DropoutRates dropout;

  void validate() const;
};

// Decoder logits are h W^T + b. With tied weights W is the embedding matrix
// itself, not a copy.
class LanguageModel {
 public:
  explicit LanguageModel(const LanguageModelConfig& config);

  void initialize(Rng& rng);

  const LanguageModelConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  const Parameter& decoder_weight() const { return config_.tie_weights ? encoder_.embedding() : decoder_; }
  Parameter& decoder_weight() { return config_.tie_weights ? encoder_.embedding() : decoder_; }
  Parameter& decoder_bias() { return decoder_bias_; }
  const Parameter& decoder_bias() const { return decoder_bias_; }

  // Every trainable array once; a tied decoder is not listed separately.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  LanguageModelConfig config_;
  Encoder encoder_;
  Parameter decoder_;  // empty when tied
  Parameter decoder_bias_;
};

struct LmOutput {
  std::vector<Tensor> logits;                   // one [vocab] row per input position
  std::vector<CellState> final_states;          // one per layer
  std::vector<std::vector<StepTrace>> traces;   // [layer][step]; empty for LSTM
};

// Evaluation-mode pass over `tokens` with no dropout. `initial` defaults to
// zero states.
LmOutput lm_forward(const LanguageModel& model, std::span<const int> tokens,
                    const std::vector<CellState>* initial = nullptr);

// ln p(tokens) with <bos> fed first. With `score_eos` the <eos> prediction
// after the last token is added.
double sentence_logprob(const LanguageModel& model, std::span<const int> tokens,
                        bool score_eos = false);

// exp of the mean negative log-likelihood per predicted token, <eos>
// predictions included.
double perplexity(const LanguageModel& model, const std::vector<std::vector<int>>& corpus);

struct LmLoss {
  Var total;  // summed negative log-likelihood
  std::size_t tokens = 0;
};

// Teacher-forced loss of a batch of sentences, each wrapped in <bos> ... <eos>.
LmLoss lm_batch_loss(Tape& tape, const LanguageModel& model,
                     const std::vector<std::span<const int>>& sentences, Rng* dropout_rng);

// Throws VocabularyError when an id is negative or not below `vocab_size`.
void check_token_ids(std::span<const int> tokens, std::size_t vocab_size);

}  // namespace onlstm
