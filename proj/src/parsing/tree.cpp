#include "onlstm/parsing/tree.hpp"

#include <cmath>
#include <functional>

#include "onlstm/errors.hpp"
#include "onlstm/numerics/rng.hpp"

namespace onlstm {

ParseTree ParseTree::leaf(std::size_t index) {
  ParseTree t;
  t.first_ = t.last_ = index;
  return t;
}

ParseTree ParseTree::node(ParseTree left, ParseTree right) {
  if (left.last_ + 1 != right.first_) {
    throw ContractError("subtrees " + left.str() + " and " + right.str() + " are not adjacent");
  }
  ParseTree t;
  t.first_ = left.first_;
  t.last_ = right.last_;
  t.children_.reserve(2);
  t.children_.push_back(std::move(left));
  t.children_.push_back(std::move(right));
  return t;
}

std::size_t ParseTree::index() const {
  if (!is_leaf()) throw ContractError("index() called on an internal node");
  return first_;
}

const ParseTree& ParseTree::left() const {
  if (is_leaf()) throw ContractError("left() called on a leaf");
  return children_[0];
}

const ParseTree& ParseTree::right() const {
  if (is_leaf()) throw ContractError("right() called on a leaf");
  return children_[1];
}

std::size_t ParseTree::internal_count() const {
  return is_leaf() ? 0 : 1 + children_[0].internal_count() + children_[1].internal_count();
}

std::size_t ParseTree::height() const {
  return is_leaf() ? 0 : 1 + std::max(children_[0].height(), children_[1].height());
}

std::string ParseTree::str() const {
  if (is_leaf()) return std::to_string(first_);
  return "(" + children_[0].str() + " " + children_[1].str() + ")";
}

SpanSet tree_to_spans(const ParseTree& tree, bool include_whole, bool include_singles) {
  SpanSet out;
  std::function<void(const ParseTree&)> walk = [&](const ParseTree& t) {
    if (t.is_leaf()) {
      if (include_singles) out.insert({t.first(), t.last()});
      return;
    }
    const bool whole = t.first() == tree.first() && t.last() == tree.last();
    if (!whole || include_whole) out.insert({t.first(), t.last()});
    walk(t.left());
    walk(t.right());
  };
  walk(tree);
  return out;
}

SpanSet tree_to_spans(const ParseTree& tree, const SpanOptions& options) {
  return tree_to_spans(tree, options.include_whole, options.include_singles);
}

Prf span_f1(const SpanSet& predicted, const SpanSet& gold) {
  std::size_t shared = 0;
  for (const Span& s : predicted) shared += gold.count(s);
  Prf out;
  if (!predicted.empty()) out.precision = static_cast<double>(shared) / static_cast<double>(predicted.size());
  if (!gold.empty()) out.recall = static_cast<double>(shared) / static_cast<double>(gold.size());
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

Prf unlabeled_f1(const ParseTree& predicted, const ParseTree& gold, const SpanOptions& options) {
  if (predicted.leaf_count() != gold.leaf_count() || predicted.first() != gold.first()) {
    throw AlignmentError("predicted tree covers " + std::to_string(predicted.leaf_count()) +
                         " tokens, gold tree covers " + std::to_string(gold.leaf_count()));
  }
  return span_f1(tree_to_spans(predicted, options), tree_to_spans(gold, options));
}

namespace {

ParseTree greedy(std::span<const double> d, std::size_t l, std::size_t r) {
  if (l == r) return ParseTree::leaf(l);
  std::size_t i = l + 1;
  for (std::size_t k = l + 2; k <= r; ++k) {
    if (d[k] > d[i]) i = k;
  }
  ParseTree right = i == r ? ParseTree::leaf(r) : ParseTree::node(ParseTree::leaf(i), greedy(d, i + 1, r));
  return ParseTree::node(greedy(d, l, i - 1), std::move(right));
}

void assign_heights(const ParseTree& t, std::vector<double>& out) {
  if (t.is_leaf()) return;
  out[t.right().first()] = static_cast<double>(t.height());
  assign_heights(t.left(), out);
  assign_heights(t.right(), out);
}

ParseTree split_tree(std::size_t l, std::size_t r, const std::function<std::size_t(std::size_t, std::size_t)>& pick) {
  if (l == r) return ParseTree::leaf(l);
  const std::size_t s = pick(l, r);  // first index of the right part, in l+1..r
  return ParseTree::node(split_tree(l, s - 1, pick), split_tree(s, r, pick));
}

}  // namespace

ParseTree greedy_parse(std::span<const double> distances) {
  if (distances.empty()) throw ContractError("cannot parse an empty sentence");
  for (double d : distances) {
    if (!std::isfinite(d)) throw ContractError("distances must be finite");
  }
  return greedy(distances, 0, distances.size() - 1);
}

std::vector<double> gold_distances(const ParseTree& tree) {
  std::vector<double> out(tree.last() + 1, 0.0);
  assign_heights(tree, out);
  return {out.begin() + static_cast<std::ptrdiff_t>(tree.first()), out.end()};
}

BaselineKind parse_baseline_kind(std::string_view text) {
  if (text == "random") return BaselineKind::kRandom;
  if (text == "balanced") return BaselineKind::kBalanced;
  if (text == "left") return BaselineKind::kLeft;
  if (text == "right") return BaselineKind::kRight;
  throw ConfigError("unknown baseline '" + std::string(text) + "' (expected random, balanced, left or right)");
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kRandom: return "random";
    case BaselineKind::kBalanced: return "balanced";
    case BaselineKind::kLeft: return "left";
    case BaselineKind::kRight: return "right";
  }
  return "unknown";
}

ParseTree baseline_tree(BaselineKind kind, std::size_t length, std::uint64_t seed) {
  if (length == 0) throw ContractError("baseline trees need at least one token");
  Rng rng(seed);
  switch (kind) {
    case BaselineKind::kLeft:
      return split_tree(0, length - 1, [](std::size_t, std::size_t r) { return r; });
    case BaselineKind::kRight:
      return split_tree(0, length - 1, [](std::size_t l, std::size_t) { return l + 1; });
    case BaselineKind::kBalanced:
      return split_tree(0, length - 1, [](std::size_t l, std::size_t r) { return l + (r - l + 2) / 2; });
    case BaselineKind::kRandom:
      return split_tree(0, length - 1, [&](std::size_t l, std::size_t r) { return l + 1 + rng.below(r - l); });
  }
  throw ConfigError("unknown baseline kind");
}

bool is_valid_tree(const ParseTree& tree, std::size_t length) {
  std::vector<std::size_t> leaves;
  bool binary = true;
  std::function<void(const ParseTree&)> walk = [&](const ParseTree& t) {
    if (t.is_leaf()) {
      leaves.push_back(t.index());
      return;
    }
    binary = binary && t.left().leaf_count() + t.right().leaf_count() == t.leaf_count();
    walk(t.left());
    walk(t.right());
  };
  walk(tree);
  if (!binary || leaves.size() != length) return false;
  for (std::size_t k = 0; k < length; ++k) {
    if (leaves[k] != k) return false;
  }
  return true;
}

}  // namespace onlstm
