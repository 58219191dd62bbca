#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onlstm/parsing/tree.hpp"

namespace onlstm {

// n-ary bracketed tree as read from text. A word node has no children.
struct BracketNode {
  std::string label;
  std::string word;
  std::vector<BracketNode> children;

  bool is_word() const noexcept { return children.empty(); }
  static BracketNode leaf(std::string word, std::string label = {});
  static BracketNode constituent(std::string label, std::vector<BracketNode> children);
};

struct LabeledSpan {
  Span span;
  std::string label;  // empty for unlabeled input
};

struct BracketedSentence {
  std::vector<std::string> tokens;
  // Every bracket of the original tree, outermost first; one-token brackets
  // (preterminals) included.
  std::vector<LabeledSpan> constituents;
  // Right-binarized copy of the tree.
  ParseTree tree = ParseTree::leaf(0);
};

// kAuto reads labels when some '(' is directly followed by a label, as in
// "(NP (DT the) (NN cat))"; "( ( the cat ) sat )" is read unlabeled.
enum class BracketFormat { kAuto, kUnlabeled, kLabeled };

// Throws ParseError with the line number as position.
BracketNode parse_bracket_tree(std::string_view text, BracketFormat format = BracketFormat::kAuto,
                               std::size_t line_number = 1);
BracketedSentence to_sentence(const BracketNode& root);
BracketedSentence parse_bracketed(std::string_view text, BracketFormat format = BracketFormat::kAuto,
                                  std::size_t line_number = 1);

// One tree per line. Blank lines and lines starting with '#' are skipped.
std::vector<BracketedSentence> read_bracketed_file(const std::filesystem::path& path,
                                                   BracketFormat format = BracketFormat::kAuto);

// "( ( the cat ) ( sat down ) )"; a single token is written bare.
// Throws AlignmentError when the token count does not match the tree.
std::string write_bracketed(const ParseTree& tree, std::span<const std::string> tokens);
// "(S (NP the cat) (VP sat down))".
std::string write_labeled(const BracketNode& root);

// Inverse of the binarization in to_sentence: binary tree, one-token leaves.
BracketNode to_bracket_node(const ParseTree& tree, std::span<const std::string> tokens);

}  // namespace onlstm
