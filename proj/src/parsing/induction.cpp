#include "onlstm/parsing/induction.hpp"

#include "onlstm/errors.hpp"
#include "onlstm/numerics/parallel.hpp"

namespace onlstm {
namespace {

void require_onlstm(const LanguageModel& model) {
  if (model.encoder().kind() != CellKind::kOnLstm) {
    throw UnsupportedModelError("distance estimates need an ON-LSTM model; this one uses plain LSTM cells");
  }
}

void add_type_hits(const BracketedSentence& gold, const SpanSet& predicted, std::map<std::string, TypeAccuracy>& out) {
  for (const LabeledSpan& c : gold.constituents) {
    // '@X' marks nodes added by binarization, not categories of the grammar.
    if (c.label.empty() || c.label.front() == '@' || c.span.begin == c.span.end) continue;
    TypeAccuracy& slot = out[c.label];
    ++slot.total;
    slot.hits += predicted.count(c.span);
  }
}

SpanSet gold_spans(const BracketedSentence& gold, const SpanOptions& options) {
  SpanSet out;
  const std::size_t last = gold.tokens.size() - 1;
  for (const LabeledSpan& c : gold.constituents) {
    const bool single = c.span.begin == c.span.end;
    const bool whole = c.span.begin == 0 && c.span.end == last;
    if (single && !options.include_singles) continue;
    if (whole && !single && !options.include_whole) continue;
    out.insert(c.span);
  }
  if (options.include_singles) {
    for (std::size_t k = 0; k <= last; ++k) out.insert({k, k});
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> estimate_distances_all(const LanguageModel& model, std::span<const int> tokens) {
  require_onlstm(model);
  if (tokens.empty()) throw ContractError("cannot estimate distances for an empty sentence");
  std::vector<int> input{kBosId};
  input.insert(input.end(), tokens.begin(), tokens.end());
  const LmOutput out = lm_forward(model, input);
  std::vector<std::vector<double>> distances(out.traces.size());
  for (std::size_t l = 0; l < out.traces.size(); ++l) {
    for (std::size_t t = 1; t < out.traces[l].size(); ++t) distances[l].push_back(out.traces[l][t].split_estimate);
  }
  return distances;
}

std::vector<double> estimate_distances(const LanguageModel& model, std::span<const int> tokens, std::size_t layer) {
  require_onlstm(model);
  if (layer >= model.encoder().layer_count()) {
    throw ContractError("layer " + std::to_string(layer) + " out of range for a " +
                        std::to_string(model.encoder().layer_count()) + "-layer model");
  }
  return estimate_distances_all(model, tokens)[layer];
}

std::size_t default_parse_layer(const LanguageModel& model) { return model.encoder().layer_count() / 2; }

ParseTree parse_sentence(const LanguageModel& model, std::span<const int> tokens, std::size_t layer) {
  return greedy_parse(estimate_distances(model, tokens, layer));
}

CorpusF1 score_trees(const std::vector<ParseTree>& predicted, const std::vector<EvalSentence>& corpus,
                     const SpanOptions& options) {
  if (predicted.size() != corpus.size()) {
    throw AlignmentError(std::to_string(predicted.size()) + " parses for " + std::to_string(corpus.size()) +
                         " sentences");
  }
  CorpusF1 out;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    if (!corpus[k].gold) throw DataError("sentence " + std::to_string(k) + " has no gold tree");
    const BracketedSentence& gold = *corpus[k].gold;
    if (predicted[k].first() != 0 || predicted[k].leaf_count() != gold.tokens.size()) {
      throw AlignmentError("sentence " + std::to_string(k) + ": parse covers " +
                           std::to_string(predicted[k].leaf_count()) + " tokens, gold covers " +
                           std::to_string(gold.tokens.size()));
    }
    const SpanSet spans = tree_to_spans(predicted[k], options);
    const Prf prf = span_f1(spans, gold_spans(gold, options));
    out.sentences.push_back(prf);
    out.f1 += prf.f1;
    out.precision += prf.precision;
    out.recall += prf.recall;
    add_type_hits(gold, tree_to_spans(predicted[k], true, false), out.per_label);
  }
  if (!corpus.empty()) {
    const auto n = static_cast<double>(corpus.size());
    out.f1 /= n;
    out.precision /= n;
    out.recall /= n;
  }
  return out;
}

CorpusF1 corpus_f1(const DistanceSource& source, const std::vector<EvalSentence>& corpus,
                   const SpanOptions& options) {
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    if (!corpus[k].gold) throw DataError("sentence " + std::to_string(k) + " has no gold tree");
  }
  const auto distances = parallel_map(corpus.size(), [&](std::size_t k) { return source(k, corpus[k].ids); });
  std::vector<ParseTree> trees;
  trees.reserve(corpus.size());
  for (const auto& d : distances) trees.push_back(greedy_parse(d));
  return score_trees(trees, corpus, options);
}

CorpusF1 corpus_f1(const LanguageModel& model, std::size_t layer, const std::vector<EvalSentence>& corpus,
                   const SpanOptions& options) {
  require_onlstm(model);
  return corpus_f1(
      [&](std::size_t, std::span<const int> ids) { return estimate_distances(model, ids, layer); }, corpus,
      options);
}

DistanceSource gold_distance_source(const std::vector<EvalSentence>& corpus) {
  return [&corpus](std::size_t index, std::span<const int>) {
    if (!corpus.at(index).gold) throw DataError("sentence " + std::to_string(index) + " has no gold tree");
    return gold_distances(corpus[index].gold->tree);
  };
}

std::vector<ParseTree> parse_corpus(const LanguageModel& model, std::size_t layer,
                                    const std::vector<std::vector<int>>& sentences) {
  require_onlstm(model);
  const auto distances = parallel_map(sentences.size(), [&](std::size_t k) {
    return estimate_distances(model, sentences[k], layer);
  });
  std::vector<ParseTree> trees;
  trees.reserve(sentences.size());
  for (const auto& d : distances) trees.push_back(greedy_parse(d));
  return trees;
}

std::vector<PairScore> score_pair_list(const LanguageModel& model, const std::vector<MinimalPair>& pairs) {
  // Whole-sentence probability, <eos> included, so a sentence-final verb is
  // judged by what may follow it as well.
  return parallel_map(pairs.size(), [&](std::size_t k) {
    PairScore s;
    s.grammatical = sentence_logprob(model, pairs[k].grammatical, true);
    s.ungrammatical = sentence_logprob(model, pairs[k].ungrammatical, true);
    s.correct = s.grammatical > s.ungrammatical;
    return s;
  });
}

double score_pairs(const LanguageModel& model, const std::vector<MinimalPair>& pairs) {
  if (pairs.empty()) throw ContractError("no pairs to score");
  std::size_t hits = 0;
  for (const PairScore& s : score_pair_list(model, pairs)) hits += s.correct;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

}  // namespace onlstm
