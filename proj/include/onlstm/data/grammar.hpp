#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "onlstm/parsing/brackets.hpp"

namespace onlstm {

struct Production {
  std::string lhs;
  std::vector<std::string> rhs;
  double probability = 1.0;
};

// Probabilistic CFG. Any symbol that never appears on a left-hand side is a
// terminal. A production whose right side is one terminal is lexical and its
// left side acts as a part-of-speech tag.
class Grammar {
 public:
  // Throws ConfigError unless each nonterminal's probabilities sum to 1 within
  // 1e-9 and every nonterminal derives some terminal string.
  Grammar(std::string start, std::vector<Production> productions);

  // Text form, one production per line: "NP -> Det N 0.4". '#' starts a comment.
  static Grammar parse(std::string_view text);
  static Grammar default_grammar();

  const std::string& start() const { return start_; }
  const std::vector<Production>& productions() const { return productions_; }
  // Indices into productions() for one nonterminal, in declaration order.
  const std::vector<std::size_t>& alternatives(const std::string& lhs) const;
  bool is_nonterminal(const std::string& symbol) const { return by_lhs_.count(symbol) > 0; }
  std::set<std::string> nonterminals() const;
  std::set<std::string> terminals() const;
  std::string str() const;

 private:
  std::string start_;
  std::vector<Production> productions_;
  std::map<std::string, std::vector<std::size_t>> by_lhs_;
};

struct CfgOptions {
  std::size_t max_length = 20;
  // A nonterminal may occur at most max_depth + 1 times on any root-to-leaf path.
  std::size_t max_depth = 5;
};

struct CfgSample {
  std::vector<std::string> tokens;
  // Right-binarized derivation. Lexical nodes become labeled words; the extra
  // nodes introduced by binarizing X get the label "@X".
  BracketNode gold;
  std::vector<std::size_t> productions_used;
};

// Top-down sampling with rejection of derivations that run past max_length or
// max_depth. Throws ConfigError after 10^6 rejections in a row.
std::vector<CfgSample> generate_cfg_corpus(const Grammar& grammar, std::size_t count, const CfgOptions& options,
                                           std::uint64_t seed);

}  // namespace onlstm
