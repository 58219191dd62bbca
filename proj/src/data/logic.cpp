#include "onlstm/data/logic.hpp"

#include <array>
#include <cmath>
#include <functional>

#include "onlstm/errors.hpp"

namespace onlstm {
namespace {

constexpr std::array<std::string_view, 7> kRelationNames{
    "equivalence",       "forward_entailment", "reverse_entailment", "exhaustive_contradiction",
    "nonexhaustive_contradiction", "cover",      "independence"};
constexpr std::uint64_t kAll = ~std::uint64_t{0};
// Give up on the label cap after this many rejections in a row.
constexpr std::size_t kCapPatience = 10'000;

std::uint64_t variable_table(std::size_t v) {
  std::uint64_t out = 0;
  for (std::size_t j = 0; j < 64; ++j) {
    if ((j >> v) & 1U) out |= std::uint64_t{1} << j;
  }
  return out;
}

class FormulaParser {
 public:
  explicit FormulaParser(std::span<const std::string> tokens) : tokens_(tokens) {}

  Formula parse() {
    Formula f = expr();
    if (pos_ != tokens_.size()) fail("unexpected '" + tokens_[pos_] + "' after a complete formula");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("formula token " + std::to_string(pos_) + ": " + what, pos_);
  }

  const std::string* peek() const { return pos_ < tokens_.size() ? &tokens_[pos_] : nullptr; }

  Formula expr() {
    const std::string* t = peek();
    if (!t) fail("formula ends early");
    if (t->size() == 1 && (*t)[0] >= 'a' && (*t)[0] < 'a' + static_cast<char>(kLogicVariables)) {
      ++pos_;
      return Formula::variable(static_cast<std::size_t>((*t)[0] - 'a'));
    }
    if (*t == "not") {
      ++pos_;
      return Formula::negation(expr());
    }
    if (*t != "(") fail("unexpected '" + *t + "'");
    ++pos_;
    Formula left = expr();
    const std::string* op = peek();
    if (!op) fail("missing ')'");
    if (*op == ")") {
      ++pos_;
      return left;
    }
    if (*op != "and" && *op != "or") fail("expected 'and', 'or' or ')' but found '" + *op + "'");
    ++pos_;
    Formula right = expr();
    const std::string* close = peek();
    if (!close || *close != ")") fail("missing ')'");
    ++pos_;
    return *op == "and" ? Formula::conjunction(std::move(left), std::move(right))
                        : Formula::disjunction(std::move(left), std::move(right));
  }

  std::span<const std::string> tokens_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_formula(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    if (c == '(' || c == ')') {
      flush();
      out.emplace_back(1, c);
    } else if (c == ' ' || c == '\t') {
      flush();
    } else {
      word += c;
    }
  }
  flush();
  return out;
}

void append_tokens(const Formula& f, std::vector<std::string>& out) {
  switch (f.kind()) {
    case Formula::Kind::kVariable:
      out.emplace_back(1, static_cast<char>('a' + f.variable_index()));
      return;
    case Formula::Kind::kNot:
      out.insert(out.end(), {"(", "not"});
      append_tokens(f.operand(0), out);
      out.emplace_back(")");
      return;
    case Formula::Kind::kAnd:
    case Formula::Kind::kOr:
      out.emplace_back("(");
      append_tokens(f.operand(0), out);
      out.emplace_back(f.kind() == Formula::Kind::kAnd ? "and" : "or");
      append_tokens(f.operand(1), out);
      out.emplace_back(")");
      return;
  }
}

LogicSample sample_pair(std::size_t bucket, Rng& rng) {
  std::size_t a = bucket;
  std::size_t b = rng.below(bucket + 1);
  if (rng.bernoulli(0.5)) std::swap(a, b);
  const Formula f1 = random_formula(a, rng);
  const Formula f2 = random_formula(b, rng);
  return {f1.tokens(), f2.tokens(), logic_relation_oracle(f1, f2), a, b};
}

// Draws `count` samples, rejecting any whose label already fills its quota.
std::vector<LogicSample> fill_capped(std::size_t count, double cap, Rng& rng,
                                     const std::function<std::size_t(Rng&)>& pick_bucket, bool& lifted) {
  const auto quota = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cap * static_cast<double>(count))));
  std::array<std::size_t, 7> seen{};
  std::vector<LogicSample> out;
  out.reserve(count);
  std::size_t misses = 0;
  lifted = false;
  while (out.size() < count) {
    LogicSample s = sample_pair(pick_bucket(rng), rng);
    std::size_t& n = seen[static_cast<std::size_t>(s.label)];
    if (!lifted && n >= quota) {
      if (++misses >= kCapPatience) lifted = true;
      continue;
    }
    misses = 0;
    ++n;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string_view to_string(Relation relation) { return kRelationNames.at(static_cast<std::size_t>(relation)); }

Relation parse_relation(std::string_view text) {
  for (std::size_t k = 0; k < kRelationNames.size(); ++k) {
    if (kRelationNames[k] == text) return static_cast<Relation>(k);
  }
  throw DataError("unknown relation label '" + std::string(text) + "'");
}

Formula Formula::variable(std::size_t index) {
  if (index >= kLogicVariables) throw ContractError("variable index out of range");
  Formula f;
  f.variable_ = index;
  return f;
}

Formula Formula::negation(Formula operand) {
  Formula f;
  f.kind_ = Kind::kNot;
  f.operands_.push_back(std::move(operand));
  return f;
}

Formula Formula::conjunction(Formula left, Formula right) {
  Formula f;
  f.kind_ = Kind::kAnd;
  f.operands_.push_back(std::move(left));
  f.operands_.push_back(std::move(right));
  return f;
}

Formula Formula::disjunction(Formula left, Formula right) {
  Formula f = conjunction(std::move(left), std::move(right));
  f.kind_ = Kind::kOr;
  return f;
}

std::size_t Formula::operator_count() const {
  std::size_t n = kind_ == Kind::kVariable ? 0 : 1;
  for (const Formula& o : operands_) n += o.operator_count();
  return n;
}

std::uint64_t Formula::truth_table() const {
  switch (kind_) {
    case Kind::kVariable: return variable_table(variable_);
    case Kind::kNot: return ~operands_[0].truth_table();
    case Kind::kAnd: return operands_[0].truth_table() & operands_[1].truth_table();
    case Kind::kOr: return operands_[0].truth_table() | operands_[1].truth_table();
  }
  return 0;
}

std::vector<std::string> Formula::tokens() const {
  std::vector<std::string> out;
  append_tokens(*this, out);
  return out;
}

std::string Formula::str() const {
  std::string out;
  for (const std::string& t : tokens()) out += (out.empty() ? "" : " ") + t;
  return out;
}

Formula parse_formula(std::span<const std::string> tokens) { return FormulaParser(tokens).parse(); }

Formula parse_formula(std::string_view text) {
  const auto tokens = split_formula(text);
  return parse_formula(std::span<const std::string>(tokens));
}

Relation relation_of(std::uint64_t first, std::uint64_t second) {
  if (first == second) return Relation::kEquivalence;
  // Disjointness is decided before containment so that an unsatisfiable side
  // against its negation still reads as a contradiction.
  const bool disjoint = (first & second) == 0;
  const bool cover = (first | second) == kAll;
  if (disjoint) return cover ? Relation::kExhaustiveContradiction : Relation::kNonExhaustiveContradiction;
  if ((first & ~second) == 0) return Relation::kForwardEntailment;
  if ((second & ~first) == 0) return Relation::kReverseEntailment;
  return cover ? Relation::kCoverIndependence : Relation::kIndependence;
}

Relation logic_relation_oracle(const Formula& first, const Formula& second) {
  return relation_of(first.truth_table(), second.truth_table());
}

Relation logic_relation_oracle(std::string_view first, std::string_view second) {
  return logic_relation_oracle(parse_formula(first), parse_formula(second));
}

Formula random_formula(std::size_t operators, Rng& rng) {
  if (operators == 0) return Formula::variable(rng.below(kLogicVariables));
  const std::size_t choice = rng.below(3);
  if (choice == 0) return Formula::negation(random_formula(operators - 1, rng));
  const std::size_t left = rng.below(operators);
  Formula l = random_formula(left, rng);
  Formula r = random_formula(operators - 1 - left, rng);
  return choice == 1 ? Formula::conjunction(std::move(l), std::move(r))
                     : Formula::disjunction(std::move(l), std::move(r));
}

void LogicConfig::validate() const {
  if (train_size == 0) throw ConfigError("train_size must be at least 1");
  if (!(label_cap > 0.0 && label_cap <= 1.0)) throw ConfigError("label_cap must be in (0, 1]");
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) throw ConfigError("valid_fraction must be in [0, 1)");
}

LogicDataset logic_generate(const LogicConfig& config) {
  config.validate();
  Rng root(config.seed);
  LogicDataset out;
  Rng train_rng = root.fork();
  bool lifted = false;
  std::vector<LogicSample> pool = fill_capped(
      config.train_size, config.label_cap, train_rng,
      [&](Rng& r) { return r.below(config.max_ops_train + 1); }, lifted);
  if (lifted) out.cap_lifted.push_back("train");
  // The cap makes late draws skew toward rare labels, so mix before splitting.
  train_rng.shuffle(std::span(pool));
  const auto n_valid = static_cast<std::size_t>(std::round(config.valid_fraction * static_cast<double>(pool.size())));
  out.valid.assign(pool.end() - static_cast<std::ptrdiff_t>(n_valid), pool.end());
  pool.resize(pool.size() - n_valid);
  out.train = std::move(pool);
  for (std::size_t b = 1; b <= config.max_ops_test && config.test_per_bucket > 0; ++b) {
    Rng bucket_rng = root.fork();
    out.test[b] = fill_capped(config.test_per_bucket, config.label_cap, bucket_rng,
                              [b](Rng&) { return b; }, lifted);
    if (lifted) out.cap_lifted.push_back("test bucket " + std::to_string(b));
  }
  return out;
}

}  // namespace onlstm
