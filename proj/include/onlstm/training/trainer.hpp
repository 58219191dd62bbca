#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "onlstm/models/classifier.hpp"
#include "onlstm/models/language_model.hpp"
#include "onlstm/training/optim.hpp"

namespace onlstm {

struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  double clip = 0.25;
  std::size_t batch_size = 32;  // a value >= the data size gives full-batch steps
  std::uint64_t seed = 1;
  std::size_t patience = 5;     // epochs without validation improvement; 0 disables
  bool shuffle = true;

  void validate() const;
};

struct LabeledPair {
  std::vector<int> first;
  std::vector<int> second;
  int label = 0;
};

struct EpochStats {
  double train_loss = 0.0;  // mean per token (LM) or per pair (classifier)
  double valid_loss = 0.0;
  double valid_metric = 0.0;  // perplexity (LM) or accuracy (classifier)
};

// Draws the per-epoch batch order: shuffled, then grouped so each batch holds
// sentences of similar length. Every index appears exactly once.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& lengths,
                                                   std::size_t batch_size, bool shuffle, Rng& rng);

// One pass of mini-batch updates over `train`, then evaluation on `valid`
// (skipped when empty). `rng` drives shuffling and dropout.
EpochStats train_lm_epoch(LanguageModel& model, const std::vector<std::vector<int>>& train,
                          const std::vector<std::vector<int>>& valid, const TrainConfig& config, Adam& optimizer,
                          Rng& rng);

EpochStats train_classifier_epoch(InferenceClassifier& classifier, const std::vector<LabeledPair>& train,
                                  const std::vector<LabeledPair>& valid, const TrainConfig& config,
                                  Adam& optimizer, Rng& rng);

// Most probable relation per pair (ties go to the lower label).
std::vector<int> predict(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs);
double accuracy(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs);
// Mean cross-entropy per pair, evaluation mode.
double classifier_loss(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs);

struct EpochRecord {
  std::size_t epoch = 0;
  EpochStats stats;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs up to config.epochs epochs with early stopping on validation loss and
// leaves the model at its best-validation weights (the last epoch's weights
// when there is no validation data).
TrainHistory train_language_model(LanguageModel& model, const std::vector<std::vector<int>>& train,
                                  const std::vector<std::vector<int>>& valid, const TrainConfig& config,
                                  const EpochCallback& on_epoch = {});
TrainHistory train_classifier(InferenceClassifier& classifier, const std::vector<LabeledPair>& train,
                              const std::vector<LabeledPair>& valid, const TrainConfig& config,
                              const EpochCallback& on_epoch = {});

// "epoch=3 split=valid loss=2.1 perplexity=8.2 seconds=1.5"-style lines, one
// per split.
std::vector<std::string> metrics_lines(const EpochRecord& record, bool language_model);

}  // namespace onlstm
