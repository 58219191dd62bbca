#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace onlstm {

// Minimal pair from the subject-verb agreement templates:
//   the N_subj [P the N]{0,2} V [tail]
// Both sides are identical except at verb_position.
struct AgreementPair {
  std::vector<std::string> grammatical;
  std::vector<std::string> ungrammatical;
  // "simple" (no prepositional phrase), "pp" (one) or "long" (two), with an
  // "_attractor" suffix when an intervening noun has the other number.
  std::string category;
  std::size_t verb_position = 0;
  bool attractor = false;
  bool long_attractor = false;  // two phrases and an attractor among them
};

std::vector<AgreementPair> generate_agreement_pairs(std::size_t count, std::uint64_t seed);
// Grammatical sentences from the same templates, for language model training.
std::vector<std::vector<std::string>> generate_agreement_corpus(std::size_t count, std::uint64_t seed);

// Number of a noun or verb in the agreement lexicon: +1 singular, -1 plural,
// 0 for words that carry none.
int agreement_number(const std::string& word);

}  // namespace onlstm
