#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace onlstm {

// Strictly binary tree over consecutive token indices. Construction through
// leaf() and node() guarantees the leaves read left to right are
// first()..last() in order.
class ParseTree {
 public:
  static ParseTree leaf(std::size_t index);
  // Throws ContractError unless right starts where left ends.
  static ParseTree node(ParseTree left, ParseTree right);

  bool is_leaf() const noexcept { return children_.empty(); }
  std::size_t index() const;  // leaves only
  const ParseTree& left() const;
  const ParseTree& right() const;
  std::size_t first() const noexcept { return first_; }
  std::size_t last() const noexcept { return last_; }
  std::size_t leaf_count() const noexcept { return last_ - first_ + 1; }
  std::size_t internal_count() const;
  std::size_t height() const;  // leaves have height 0

  // Leaf indices in brackets: "((0 1) 2)".
  std::string str() const;

  bool operator==(const ParseTree&) const = default;

 private:
  ParseTree() = default;
  std::size_t first_ = 0;
  std::size_t last_ = 0;
  std::vector<ParseTree> children_;
};

// Inclusive token range.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  auto operator<=>(const Span&) const = default;
};
using SpanSet = std::set<Span>;

struct SpanOptions {
  bool include_whole = true;     // the span covering the whole sentence
  bool include_singles = false;  // one-token spans
};

// Spans of all internal nodes, plus leaf spans when include_singles is set.
SpanSet tree_to_spans(const ParseTree& tree, bool include_whole, bool include_singles);
SpanSet tree_to_spans(const ParseTree& tree, const SpanOptions& options = {});

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Empty denominators give 0.
Prf span_f1(const SpanSet& predicted, const SpanSet& gold);
// Throws AlignmentError when the trees cover different numbers of tokens.
Prf unlabeled_f1(const ParseTree& predicted, const ParseTree& gold, const SpanOptions& options = {});

// Top-down greedy split: inside [l, r] take i = argmax of distances over
// l+1..r (leftmost on ties) and build ((l..i-1) (i (i+1..r))). Position 0 of
// every span is never a split candidate.
ParseTree greedy_parse(std::span<const double> distances);

// Distances under which greedy_parse rebuilds `tree` whenever the tree has the
// greedy shape: the split point of each node gets that node's height.
std::vector<double> gold_distances(const ParseTree& tree);

enum class BaselineKind { kRandom, kBalanced, kLeft, kRight };
BaselineKind parse_baseline_kind(std::string_view text);  // throws ConfigError
std::string_view to_string(BaselineKind kind);

// Left/right-branching, balanced (left half gets the extra token) or seeded
// random splits.
ParseTree baseline_tree(BaselineKind kind, std::size_t length, std::uint64_t seed = 0);

// Independent structural check: binary, leaves exactly 0..length-1 in order.
bool is_valid_tree(const ParseTree& tree, std::size_t length);

}  // namespace onlstm
