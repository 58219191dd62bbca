#include "onlstm/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/ops.hpp"

namespace onlstm {
namespace {

// Sentences are sorted by length inside pools of this many batches.
constexpr std::size_t kPoolBatches = 8;
constexpr std::size_t kEvalChunk = 256;

std::string index_list(const std::vector<std::size_t>& batch) {
  std::string out;
  for (std::size_t k = 0; k < batch.size() && k < 8; ++k) out += (k ? "," : "") + std::to_string(batch[k]);
  if (batch.size() > 8) out += ",...";
  return out;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Tensor>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

// Backward on the mean loss, then clip and step. NumericalError from the
// forward pass is rethrown with the offending batch's item indices.
template <typename LossFn>
double update(const std::vector<Parameter*>& params, const std::vector<std::size_t>& batch,
              const TrainConfig& config, Adam& optimizer, const char* what, LossFn&& loss_fn) {
  zero_grads(params);
  double total = 0.0;
  try {
    Tape tape;
    const auto [loss, count] = loss_fn(tape);
    total = loss.value().item();
    tape.backward(ops::affine(loss, 1.0 / static_cast<double>(count), 0.0));
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("non-finite loss on ") + what + " " + index_list(batch) + ": " + e.what());
  }
  clip_gradients(params, config.clip);
  optimizer.step();
  return total;
}

struct ClassifierEval {
  std::vector<int> predictions;
  double loss = 0.0;
};

ClassifierEval evaluate_classifier(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs) {
  ClassifierEval out;
  for (std::size_t begin = 0; begin < pairs.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(pairs.size(), begin + kEvalChunk);
    std::vector<SentencePair> chunk;
    for (std::size_t k = begin; k < end; ++k) chunk.push_back({pairs[k].first, pairs[k].second});
    Tape tape(Tape::Mode::kInference);
    const Tensor logp = log_softmax_rows(classifier_logits(tape, classifier, chunk, nullptr).value());
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const auto row = logp.row(r);
      out.predictions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
      out.loss -= row[static_cast<std::size_t>(pairs[begin + r].label)];
    }
  }
  if (!pairs.empty()) out.loss /= static_cast<double>(pairs.size());
  return out;
}

double fraction_correct(const std::vector<int>& predictions, const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) hits += predictions[k] == pairs[k].label;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

void check_labels(const std::vector<LabeledPair>& pairs) {
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (pairs[k].label < 0 || pairs[k].label >= static_cast<int>(kRelationCount)) {
      throw DataError("pair " + std::to_string(k) + " has label " + std::to_string(pairs[k].label) +
                      " outside 0.." + std::to_string(kRelationCount - 1));
    }
  }
}

template <typename Model, typename EpochFn>
TrainHistory run_epochs(Model& model, bool has_valid, const TrainConfig& config, const EpochCallback& on_epoch,
                        EpochFn&& epoch_fn) {
  config.validate();
  const auto params = model.parameters();
  Adam optimizer(params, {config.learning_rate});
  Rng rng(config.seed);
  TrainHistory history;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values;
  std::size_t since_best = 0;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord record{e, epoch_fn(optimizer, rng), 0.0};
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (!has_valid) {
      history.best_epoch = e;
      continue;
    }
    if (record.stats.valid_loss < best) {
      best = record.stats.valid_loss;
      best_values = snapshot(params);
      history.best_epoch = e;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  if (has_valid && !best_values.empty()) restore(params, best_values);
  return history;
}

std::string number(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(clip > 0.0)) throw ConfigError("clip threshold must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& lengths,
                                                   std::size_t batch_size, bool shuffle, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> batches;
  const std::size_t pool = batch_size * kPoolBatches;
  for (std::size_t begin = 0; begin < order.size(); begin += pool) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(begin);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    for (auto it = first; it != last;) {
      const auto stop = it + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(batch_size), last - it);
      batches.emplace_back(it, stop);
      it = stop;
    }
  }
  if (shuffle) rng.shuffle(std::span(batches));
  return batches;
}

EpochStats train_lm_epoch(LanguageModel& model, const std::vector<std::vector<int>>& train,
                          const std::vector<std::vector<int>>& valid, const TrainConfig& config, Adam& optimizer,
                          Rng& rng) {
  if (train.empty()) throw ContractError("training corpus is empty");
  const auto params = model.parameters();
  std::vector<std::size_t> lengths;
  for (const auto& s : train) lengths.push_back(s.size());
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& batch : make_batches(lengths, config.batch_size, config.shuffle, rng)) {
    std::vector<std::span<const int>> rows;
    for (std::size_t i : batch) rows.emplace_back(train[i]);
    total += update(params, batch, config, optimizer, "sentences", [&](Tape& tape) {
      const LmLoss loss = lm_batch_loss(tape, model, rows, &rng);
      tokens += loss.tokens;
      return std::pair{loss.total, loss.tokens};
    });
  }
  EpochStats stats;
  stats.train_loss = total / static_cast<double>(tokens);
  if (!valid.empty()) {
    stats.valid_metric = perplexity(model, valid);
    stats.valid_loss = std::log(stats.valid_metric);
  }
  return stats;
}

EpochStats train_classifier_epoch(InferenceClassifier& classifier, const std::vector<LabeledPair>& train,
                                  const std::vector<LabeledPair>& valid, const TrainConfig& config,
                                  Adam& optimizer, Rng& rng) {
  if (train.empty()) throw ContractError("training set is empty");
  check_labels(train);
  check_labels(valid);
  const auto params = classifier.parameters();
  std::vector<std::size_t> lengths;
  for (const auto& p : train) lengths.push_back(p.first.size() + p.second.size());
  double total = 0.0;
  for (const auto& batch : make_batches(lengths, config.batch_size, config.shuffle, rng)) {
    std::vector<SentencePair> pairs;
    std::vector<int> labels;
    for (std::size_t i : batch) {
      pairs.push_back({train[i].first, train[i].second});
      labels.push_back(train[i].label);
    }
    total += update(params, batch, config, optimizer, "pairs", [&](Tape& tape) {
      return std::pair{ops::cross_entropy(classifier_logits(tape, classifier, pairs, &rng), labels),
                       pairs.size()};
    });
  }
  EpochStats stats;
  stats.train_loss = total / static_cast<double>(train.size());
  if (!valid.empty()) {
    const ClassifierEval eval = evaluate_classifier(classifier, valid);
    stats.valid_loss = eval.loss;
    stats.valid_metric = fraction_correct(eval.predictions, valid);
  }
  return stats;
}

std::vector<int> predict(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs) {
  return evaluate_classifier(classifier, pairs).predictions;
}

double accuracy(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs) {
  check_labels(pairs);
  return fraction_correct(predict(classifier, pairs), pairs);
}

double classifier_loss(const InferenceClassifier& classifier, const std::vector<LabeledPair>& pairs) {
  check_labels(pairs);
  return evaluate_classifier(classifier, pairs).loss;
}

TrainHistory train_language_model(LanguageModel& model, const std::vector<std::vector<int>>& train,
                                  const std::vector<std::vector<int>>& valid, const TrainConfig& config,
                                  const EpochCallback& on_epoch) {
  return run_epochs(model, !valid.empty(), config, on_epoch, [&](Adam& opt, Rng& rng) {
    return train_lm_epoch(model, train, valid, config, opt, rng);
  });
}

TrainHistory train_classifier(InferenceClassifier& classifier, const std::vector<LabeledPair>& train,
                              const std::vector<LabeledPair>& valid, const TrainConfig& config,
                              const EpochCallback& on_epoch) {
  return run_epochs(classifier, !valid.empty(), config, on_epoch, [&](Adam& opt, Rng& rng) {
    return train_classifier_epoch(classifier, train, valid, config, opt, rng);
  });
}

std::vector<std::string> metrics_lines(const EpochRecord& r, bool language_model) {
  const std::string head = "epoch=" + std::to_string(r.epoch);
  const std::string secs = " seconds=" + number(r.seconds);
  std::vector<std::string> lines;
  lines.push_back(head + " split=train loss=" + number(r.stats.train_loss) +
                  (language_model ? " perplexity=" + number(std::exp(r.stats.train_loss)) : "") + secs);
  lines.push_back(head + " split=valid loss=" + number(r.stats.valid_loss) +
                  (language_model ? " perplexity=" : " accuracy=") + number(r.stats.valid_metric) + secs);
  return lines;
}

}  // namespace onlstm
