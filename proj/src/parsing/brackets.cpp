#include "onlstm/parsing/brackets.hpp"

#include <cctype>

#include "onlstm/errors.hpp"
#include "onlstm/io/files.hpp"

namespace onlstm {
namespace {

struct Token {
  enum Kind { kOpen, kClose, kWord } kind;
  std::string text;
  bool glued = false;  // word directly after '(' with no space
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t k = 0;
  while (k < text.size()) {
    const char c = text[k];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++k;
    } else if (c == '(' || c == ')') {
      out.push_back({c == '(' ? Token::kOpen : Token::kClose, std::string(1, c)});
      ++k;
    } else {
      const bool glued = k > 0 && text[k - 1] == '(';
      std::size_t end = k;
      while (end < text.size() && text[end] != '(' && text[end] != ')' &&
             !std::isspace(static_cast<unsigned char>(text[end]))) {
        ++end;
      }
      out.push_back({Token::kWord, std::string(text.substr(k, end - k)), glued});
      k = end;
    }
  }
  return out;
}

class Reader {
 public:
  Reader(std::vector<Token> tokens, bool labeled, std::size_t line)
      : tokens_(std::move(tokens)), labeled_(labeled), line_(line) {}

  BracketNode read_root() {
    if (tokens_.empty()) fail("empty tree");
    BracketNode root = tokens_[0].kind == Token::kWord ? BracketNode::leaf(tokens_[pos_++].text) : read_node();
    if (pos_ < tokens_.size()) {
      fail(tokens_[pos_].kind == Token::kClose ? "unbalanced parentheses: unexpected ')'"
                                               : "text after the closing parenthesis");
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("line " + std::to_string(line_) + ": " + what, line_);
  }

  BracketNode read_node() {
    if (pos_ >= tokens_.size() || tokens_[pos_].kind != Token::kOpen) fail("expected '('");
    ++pos_;
    std::string label;
    if (labeled_ && pos_ + 1 < tokens_.size() && tokens_[pos_].kind == Token::kWord &&
        tokens_[pos_ + 1].kind != Token::kClose) {
      label = tokens_[pos_++].text;
    }
    std::vector<BracketNode> children;
    while (true) {
      if (pos_ >= tokens_.size()) fail("unbalanced parentheses: missing ')'");
      const Token& t = tokens_[pos_];
      if (t.kind == Token::kClose) {
        ++pos_;
        break;
      }
      if (t.kind == Token::kOpen) {
        children.push_back(read_node());
      } else {
        children.push_back(BracketNode::leaf(t.text));
        ++pos_;
      }
    }
    if (children.empty()) fail("empty constituent '( )'");
    if (children.size() == 1 && children[0].is_word()) {
      // Preterminal such as (DT the).
      children[0].label = label;
      return std::move(children[0]);
    }
    return BracketNode::constituent(std::move(label), std::move(children));
  }

  std::vector<Token> tokens_;
  bool labeled_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

// Returns the binarized tree; appends tokens and constituents as it goes.
ParseTree collect(const BracketNode& node, BracketedSentence& out) {
  const std::size_t begin = out.tokens.size();
  if (node.is_word()) {
    out.tokens.push_back(node.word);
    if (!node.label.empty()) out.constituents.push_back({{begin, begin}, node.label});
    return ParseTree::leaf(begin);
  }
  const std::size_t slot = out.constituents.size();
  out.constituents.push_back({{begin, begin}, node.label});
  std::vector<ParseTree> parts;
  for (const BracketNode& child : node.children) parts.push_back(collect(child, out));
  out.constituents[slot].span.end = out.tokens.size() - 1;
  ParseTree tree = std::move(parts.back());
  for (std::size_t k = parts.size() - 1; k-- > 0;) tree = ParseTree::node(std::move(parts[k]), std::move(tree));
  return tree;
}

void write_tree(const ParseTree& tree, std::span<const std::string> tokens, std::string& out) {
  if (tree.is_leaf()) {
    out += tokens[tree.index()];
    return;
  }
  out += "( ";
  write_tree(tree.left(), tokens, out);
  out += ' ';
  write_tree(tree.right(), tokens, out);
  out += " )";
}

void write_node(const BracketNode& node, std::string& out) {
  if (node.is_word()) {
    if (node.label.empty()) {
      out += node.word;
    } else {
      out += "(" + node.label + " " + node.word + ")";
    }
    return;
  }
  // Unlabeled nodes keep the spaced form so they read back unlabeled.
  out += node.label.empty() ? "( " : "(" + node.label + " ";
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    if (k > 0) out += ' ';
    write_node(node.children[k], out);
  }
  out += node.label.empty() ? " )" : ")";
}

}  // namespace

BracketNode BracketNode::leaf(std::string word, std::string label) {
  BracketNode n;
  n.word = std::move(word);
  n.label = std::move(label);
  return n;
}

BracketNode BracketNode::constituent(std::string label, std::vector<BracketNode> children) {
  if (children.empty()) throw ContractError("a constituent needs at least one child");
  BracketNode n;
  n.label = std::move(label);
  n.children = std::move(children);
  return n;
}

BracketNode parse_bracket_tree(std::string_view text, BracketFormat format, std::size_t line_number) {
  std::vector<Token> tokens = tokenize(text);
  bool labeled = format == BracketFormat::kLabeled;
  if (format == BracketFormat::kAuto) {
    for (const Token& t : tokens) labeled = labeled || t.glued;
  }
  return Reader(std::move(tokens), labeled, line_number).read_root();
}

BracketedSentence to_sentence(const BracketNode& root) {
  BracketedSentence out;
  out.tree = collect(root, out);
  return out;
}

BracketedSentence parse_bracketed(std::string_view text, BracketFormat format, std::size_t line_number) {
  return to_sentence(parse_bracket_tree(text, format, line_number));
}

std::vector<BracketedSentence> read_bracketed_file(const std::filesystem::path& path, BracketFormat format) {
  std::vector<BracketedSentence> out;
  const auto lines = io::read_lines(path);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::string& line = lines[k];
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      out.push_back(parse_bracketed(line, format, k + 1));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), e.position());
    }
  }
  return out;
}

std::string write_bracketed(const ParseTree& tree, std::span<const std::string> tokens) {
  if (tree.first() != 0 || tree.leaf_count() != tokens.size()) {
    throw AlignmentError("tree covers " + std::to_string(tree.leaf_count()) + " tokens but " +
                         std::to_string(tokens.size()) + " were given");
  }
  std::string out;
  write_tree(tree, tokens, out);
  return out;
}

std::string write_labeled(const BracketNode& root) {
  std::string out;
  write_node(root, out);
  return out;
}

BracketNode to_bracket_node(const ParseTree& tree, std::span<const std::string> tokens) {
  if (tree.is_leaf()) return BracketNode::leaf(tokens[tree.index()]);
  return BracketNode::constituent("", {to_bracket_node(tree.left(), tokens), to_bracket_node(tree.right(), tokens)});
}

}  // namespace onlstm
