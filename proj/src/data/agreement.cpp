#include "onlstm/data/agreement.hpp"

#include <array>
#include <map>
#include <utility>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/rng.hpp"

namespace onlstm {
namespace {

using Forms = std::pair<const char*, const char*>;  // singular, plural

constexpr std::array<Forms, 10> kNouns{{{"dog", "dogs"},
                                        {"cat", "cats"},
                                        {"author", "authors"},
                                        {"pilot", "pilots"},
                                        {"farmer", "farmers"},
                                        {"teacher", "teachers"},
                                        {"senator", "senators"},
                                        {"surgeon", "surgeons"},
                                        {"guard", "guards"},
                                        {"painter", "painters"}}};
constexpr std::array<Forms, 6> kIntransitive{{{"runs", "run"},
                                              {"sleeps", "sleep"},
                                              {"laughs", "laugh"},
                                              {"smiles", "smile"},
                                              {"waits", "wait"},
                                              {"swims", "swim"}}};
constexpr std::array<Forms, 5> kTransitive{
    {{"likes", "like"}, {"sees", "see"}, {"knows", "know"}, {"admires", "admire"}, {"follows", "follow"}}};
constexpr std::array<const char*, 5> kPrepositions{"near", "behind", "beside", "with", "above"};
constexpr std::array<const char*, 4> kAdverbs{"today", "often", "again", "outside"};

const char* form(const Forms& f, bool singular) { return singular ? f.first : f.second; }

struct Sentence {
  std::vector<std::string> tokens;
  std::size_t verb_position = 0;
  std::string wrong_verb;
  std::size_t phrases = 0;
  bool attractor = false;
};

Sentence sample_sentence(Rng& rng) {
  Sentence s;
  const bool singular = rng.bernoulli(0.5);
  s.tokens = {"the", form(kNouns[rng.below(kNouns.size())], singular)};
  const double u = rng.uniform();
  s.phrases = u < 0.4 ? 0 : (u < 0.75 ? 1 : 2);
  for (std::size_t k = 0; k < s.phrases; ++k) {
    const bool n_singular = rng.bernoulli(0.5);
    s.attractor = s.attractor || n_singular != singular;
    s.tokens.insert(s.tokens.end(),
                    {kPrepositions[rng.below(kPrepositions.size())], "the",
                     form(kNouns[rng.below(kNouns.size())], n_singular)});
  }
  s.verb_position = s.tokens.size();
  if (rng.bernoulli(0.5)) {
    const Forms& v = kIntransitive[rng.below(kIntransitive.size())];
    s.tokens.emplace_back(form(v, singular));
    s.wrong_verb = form(v, !singular);
    if (rng.bernoulli(0.5)) s.tokens.emplace_back(kAdverbs[rng.below(kAdverbs.size())]);
  } else {
    const Forms& v = kTransitive[rng.below(kTransitive.size())];
    s.tokens.emplace_back(form(v, singular));
    s.wrong_verb = form(v, !singular);
    s.tokens.insert(s.tokens.end(), {"the", form(kNouns[rng.below(kNouns.size())], rng.bernoulli(0.5))});
  }
  return s;
}

const std::map<std::string, int>& number_table() {
  static const std::map<std::string, int> table = [] {
    std::map<std::string, int> t;
    auto add = [&](const auto& list) {
      for (const Forms& f : list) {
        t[f.first] = 1;
        t[f.second] = -1;
      }
    };
    add(kNouns);
    add(kIntransitive);
    add(kTransitive);
    return t;
  }();
  return table;
}

}  // namespace

std::vector<AgreementPair> generate_agreement_pairs(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ContractError("pair count must be at least 1");
  Rng rng(seed);
  std::vector<AgreementPair> out;
  out.reserve(count);
  while (out.size() < count) {
    Sentence s = sample_sentence(rng);
    AgreementPair p;
    p.grammatical = s.tokens;
    p.ungrammatical = s.tokens;
    p.ungrammatical[s.verb_position] = s.wrong_verb;
    p.verb_position = s.verb_position;
    p.attractor = s.attractor;
    p.long_attractor = s.attractor && s.phrases == 2;
    p.category = s.phrases == 0 ? "simple" : (s.phrases == 1 ? "pp" : "long");
    if (s.attractor) p.category += "_attractor";
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<std::string>> generate_agreement_corpus(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ContractError("sentence count must be at least 1");
  Rng rng(seed);
  std::vector<std::vector<std::string>> out;
  out.reserve(count);
  while (out.size() < count) out.push_back(sample_sentence(rng).tokens);
  return out;
}

int agreement_number(const std::string& word) {
  const auto& table = number_table();
  const auto it = table.find(word);
  return it == table.end() ? 0 : it->second;
}

}  // namespace onlstm
