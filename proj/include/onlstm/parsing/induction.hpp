#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onlstm/models/language_model.hpp"
#include "onlstm/parsing/brackets.hpp"
#include "onlstm/parsing/tree.hpp"

namespace onlstm {

// Split estimates of one layer, one per token. The model reads <bos> then
// the tokens from a zero state in evaluation mode; entry t comes from the step
// that consumes token t. Throws UnsupportedModelError for a plain LSTM and
// ContractError for an empty sentence or a layer out of range.
std::vector<double> estimate_distances(const LanguageModel& model, std::span<const int> tokens, std::size_t layer);
// All layers from one forward pass, indexed [layer][token].
std::vector<std::vector<double>> estimate_distances_all(const LanguageModel& model, std::span<const int> tokens);

// Layer used when none is requested: index L/2 (0-based), the second of three.
std::size_t default_parse_layer(const LanguageModel& model);

ParseTree parse_sentence(const LanguageModel& model, std::span<const int> tokens, std::size_t layer);

struct EvalSentence {
  std::vector<int> ids;
  std::optional<BracketedSentence> gold;
};

struct TypeAccuracy {
  std::size_t hits = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0; }
};

struct CorpusF1 {
  double f1 = 0.0;  // mean of sentence-level F1
  double precision = 0.0;
  double recall = 0.0;
  std::vector<Prf> sentences;
  // Labeled gold constituents of two or more tokens recovered by the parse.
  // Labels starting with '@' (binarization helpers) are left out.
  std::map<std::string, TypeAccuracy> per_label;
};

// Sentence-level F1 averaged over the corpus against gold.constituents.
// Throws DataError when a sentence has no gold tree, AlignmentError when a
// predicted tree and its gold disagree in length.
CorpusF1 score_trees(const std::vector<ParseTree>& predicted, const std::vector<EvalSentence>& corpus,
                     const SpanOptions& options = {});

// Anything that yields distances for sentence `index`.
using DistanceSource = std::function<std::vector<double>(std::size_t index, std::span<const int> ids)>;

CorpusF1 corpus_f1(const DistanceSource& source, const std::vector<EvalSentence>& corpus,
                   const SpanOptions& options = {});
CorpusF1 corpus_f1(const LanguageModel& model, std::size_t layer, const std::vector<EvalSentence>& corpus,
                   const SpanOptions& options = {});
// Distances read off each sentence's own binarized gold tree.
DistanceSource gold_distance_source(const std::vector<EvalSentence>& corpus);

// Parses every sentence with the model's layer, in corpus order.
std::vector<ParseTree> parse_corpus(const LanguageModel& model, std::size_t layer,
                                    const std::vector<std::vector<int>>& sentences);

struct MinimalPair {
  std::vector<int> grammatical;
  std::vector<int> ungrammatical;
};

struct PairScore {
  double grammatical = 0.0;
  double ungrammatical = 0.0;
  // Strictly higher log-probability for the grammatical side; ties are wrong.
  bool correct = false;
};

std::vector<PairScore> score_pair_list(const LanguageModel& model, const std::vector<MinimalPair>& pairs);
// Fraction correct. Throws ContractError on an empty list.
double score_pairs(const LanguageModel& model, const std::vector<MinimalPair>& pairs);

}  // namespace onlstm
