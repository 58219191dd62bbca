#include "onlstm/data/grammar.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/rng.hpp"

namespace onlstm {
namespace {

constexpr std::size_t kMaxConsecutiveRejections = 1'000'000;

void add_lexicon(std::vector<Production>& out, const std::string& tag, const std::vector<std::string>& words) {
  for (const std::string& w : words) out.push_back({tag, {w}, 1.0 / static_cast<double>(words.size())});
}

std::string base_label(const std::string& label) { return label.starts_with('@') ? label.substr(1) : label; }

BracketNode binarize(const std::string& label, std::vector<BracketNode> children) {
  if (children.size() <= 2) return BracketNode::constituent(label, std::move(children));
  BracketNode head = std::move(children.front());
  children.erase(children.begin());
  BracketNode rest = binarize("@" + base_label(label), std::move(children));
  return BracketNode::constituent(label, {std::move(head), std::move(rest)});
}

class Sampler {
 public:
  Sampler(const Grammar& grammar, const CfgOptions& options, Rng& rng)
      : grammar_(grammar), options_(options), rng_(rng) {}

  // Empty optional when the derivation had to be abandoned.
  std::optional<CfgSample> sample() {
    tokens_.clear();
    used_.clear();
    on_path_.clear();
    failed_ = false;
    BracketNode root = expand(grammar_.start());
    if (failed_) return std::nullopt;
    return CfgSample{tokens_, std::move(root), used_};
  }

 private:
  std::size_t choose(const std::vector<std::size_t>& alternatives) {
    const double u = rng_.uniform();
    double acc = 0.0;
    std::size_t last = alternatives.front();
    for (std::size_t k : alternatives) {
      const double p = grammar_.productions()[k].probability;
      if (p <= 0.0) continue;
      acc += p;
      last = k;
      if (u < acc) return k;
    }
    return last;  // rounding left u past the final cumulative sum
  }

  BracketNode expand(const std::string& symbol) {
    if (!grammar_.is_nonterminal(symbol)) {
      tokens_.push_back(symbol);
      failed_ = failed_ || tokens_.size() > options_.max_length;
      return BracketNode::leaf(symbol);
    }
    std::size_t& depth = on_path_[symbol];
    if (++depth > options_.max_depth + 1) {
      failed_ = true;
      return BracketNode::leaf(symbol);
    }
    const std::size_t k = choose(grammar_.alternatives(symbol));
    used_.push_back(k);
    const Production& p = grammar_.productions()[k];
    BracketNode out;
    if (p.rhs.size() == 1 && !grammar_.is_nonterminal(p.rhs[0])) {
      out = expand(p.rhs[0]);
      out.label = symbol;
    } else {
      std::vector<BracketNode> children;
      for (const std::string& s : p.rhs) {
        children.push_back(expand(s));
        if (failed_) break;
      }
      out = failed_ ? BracketNode::leaf(symbol) : binarize(symbol, std::move(children));
    }
    --on_path_[symbol];
    return out;
  }

  const Grammar& grammar_;
  const CfgOptions& options_;
  Rng& rng_;
  std::vector<std::string> tokens_;
  std::vector<std::size_t> used_;
  std::map<std::string, std::size_t> on_path_;
  bool failed_ = false;
};

}  // namespace

Grammar::Grammar(std::string start, std::vector<Production> productions)
    : start_(std::move(start)), productions_(std::move(productions)) {
  for (std::size_t k = 0; k < productions_.size(); ++k) {
    const Production& p = productions_[k];
    if (p.rhs.empty()) throw ConfigError("production for " + p.lhs + " has an empty right side");
    if (!(p.probability >= 0.0 && p.probability <= 1.0)) {
      throw ConfigError("production for " + p.lhs + " has probability outside [0, 1]");
    }
    by_lhs_[p.lhs].push_back(k);
  }
  if (!is_nonterminal(start_)) throw ConfigError("start symbol " + start_ + " has no productions");
  for (const auto& [lhs, alts] : by_lhs_) {
    double total = 0.0;
    for (std::size_t k : alts) total += productions_[k].probability;
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("probabilities for " + lhs + " sum to " + std::to_string(total));
    }
  }
  // Productive nonterminals by fixpoint.
  std::set<std::string> productive;
  for (bool grew = true; grew;) {
    grew = false;
    for (const Production& p : productions_) {
      if (productive.count(p.lhs) || p.probability <= 0.0) continue;
      bool all = true;
      for (const std::string& s : p.rhs) all = all && (!is_nonterminal(s) || productive.count(s));
      if (all) grew = productive.insert(p.lhs).second || grew;
    }
  }
  for (const auto& [lhs, alts] : by_lhs_) {
    if (!productive.count(lhs)) throw ConfigError("nonterminal " + lhs + " derives no terminal string");
  }
}

Grammar Grammar::parse(std::string_view text) {
  std::vector<Production> productions;
  std::string start;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::vector<std::string> parts;
    for (std::string w; words >> w;) parts.push_back(w);
    if (parts.empty()) continue;
    if (parts.size() < 4 || parts[1] != "->") {
      throw ParseError("grammar line " + std::to_string(number) + ": expected 'LHS -> symbols probability'", number);
    }
    Production p;
    p.lhs = parts[0];
    p.rhs.assign(parts.begin() + 2, parts.end() - 1);
    try {
      std::size_t used = 0;
      p.probability = std::stod(parts.back(), &used);
      if (used != parts.back().size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ParseError("grammar line " + std::to_string(number) + ": bad probability '" + parts.back() + "'", number);
    }
    if (start.empty()) start = p.lhs;
    productions.push_back(std::move(p));
  }
  if (productions.empty()) throw ParseError("grammar has no productions", 0);
  return Grammar(start, std::move(productions));
}

Grammar Grammar::default_grammar() {
  std::vector<Production> p{
      {"S", {"NP", "VP"}, 0.85},
      {"S", {"PP", "NP", "VP"}, 0.15},
      {"NP", {"Det", "N"}, 0.50},
      {"NP", {"Det", "AP", "N"}, 0.30},
      {"NP", {"NP", "PP"}, 0.12},
      {"NP", {"Det", "N", "RC"}, 0.08},
      {"AP", {"Adj"}, 0.80},
      {"AP", {"Deg", "Adj"}, 0.20},
      {"RC", {"Rel", "VP"}, 1.0},
      {"VP", {"Vt", "NP"}, 0.45},
      {"VP", {"Vi", "Adv"}, 0.25},
      {"VP", {"Vi", "PP"}, 0.15},
      {"VP", {"Vt", "NP", "PP"}, 0.10},
      {"VP", {"Vs", "Comp", "S"}, 0.05},
      {"PP", {"P", "NP"}, 1.0},
  };
  add_lexicon(p, "Det", {"the", "a", "every", "some", "this"});
  add_lexicon(p, "N", {"dog", "cat", "bird", "man", "woman", "child", "teacher", "student", "farmer", "king",
                       "queen", "house", "park", "garden", "river", "book"});
  add_lexicon(p, "Adj", {"big", "small", "old", "young", "red", "happy", "quiet", "strange"});
  // Rare categories get a single word so that every lexical choice is drawn
  // often enough to be measurable in a corpus of a thousand sentences.
  add_lexicon(p, "Deg", {"very"});
  add_lexicon(p, "Rel", {"who"});
  add_lexicon(p, "Vt", {"saw", "liked", "chased", "found", "helped", "followed", "visited"});
  add_lexicon(p, "Vi", {"slept", "ran", "laughed", "waited", "smiled", "swam", "cried", "rested", "jumped",
                        "sang"});
  add_lexicon(p, "Vs", {"said"});
  add_lexicon(p, "Comp", {"that"});
  add_lexicon(p, "P", {"in", "near", "with", "behind", "under", "beside"});
  add_lexicon(p, "Adv", {"quickly", "slowly", "often", "quietly", "today", "again", "later", "outside", "early",
                         "loudly", "happily", "badly", "alone", "twice", "gladly", "softly"});
  return Grammar("S", std::move(p));
}

const std::vector<std::size_t>& Grammar::alternatives(const std::string& lhs) const {
  const auto it = by_lhs_.find(lhs);
  if (it == by_lhs_.end()) throw ContractError(lhs + " is not a nonterminal");
  return it->second;
}

std::set<std::string> Grammar::nonterminals() const {
  std::set<std::string> out;
  for (const auto& [lhs, alts] : by_lhs_) out.insert(lhs);
  return out;
}

std::set<std::string> Grammar::terminals() const {
  std::set<std::string> out;
  for (const Production& p : productions_) {
    for (const std::string& s : p.rhs) {
      if (!is_nonterminal(s)) out.insert(s);
    }
  }
  return out;
}

std::string Grammar::str() const {
  std::ostringstream out;
  out.precision(17);
  for (const Production& p : productions_) {
    out << p.lhs << " ->";
    for (const std::string& s : p.rhs) out << ' ' << s;
    out << ' ' << p.probability << '\n';
  }
  return out.str();
}

std::vector<CfgSample> generate_cfg_corpus(const Grammar& grammar, std::size_t count, const CfgOptions& options,
                                           std::uint64_t seed) {
  if (count == 0) throw ContractError("sample count must be at least 1");
  if (options.max_length == 0) throw ConfigError("max_length must be at least 1");
  Rng rng(seed);
  Sampler sampler(grammar, options, rng);
  std::vector<CfgSample> out;
  out.reserve(count);
  std::size_t rejected = 0;
  while (out.size() < count) {
    if (auto s = sampler.sample()) {
      out.push_back(std::move(*s));
      rejected = 0;
    } else if (++rejected >= kMaxConsecutiveRejections) {
      throw ConfigError("grammar cannot produce sentences within max_length " + std::to_string(options.max_length) +
                        " and depth " + std::to_string(options.max_depth) + ": " +
                        std::to_string(kMaxConsecutiveRejections) + " rejections in a row");
    }
  }
  return out;
}

}  // namespace onlstm
