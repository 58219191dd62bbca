#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onlstm/numerics/rng.hpp"

namespace onlstm {

// The seven relations; the enumerator value is the classifier label.
enum class Relation {
  kEquivalence = 0,
  kForwardEntailment = 1,          // s1 strictly entails s2
  kReverseEntailment = 2,
  kExhaustiveContradiction = 3,    // disjoint, together cover everything
  kNonExhaustiveContradiction = 4, // disjoint, something satisfies neither
  kCoverIndependence = 5,          // overlap and cover, no containment
  kIndependence = 6,
};
constexpr std::size_t kLogicVariables = 6;  // a..f

std::string_view to_string(Relation relation);
Relation parse_relation(std::string_view text);  // throws DataError

// Propositional formula over a..f with not/and/or.
class Formula {
 public:
  enum class Kind { kVariable, kNot, kAnd, kOr };

  static Formula variable(std::size_t index);
  static Formula negation(Formula operand);
  static Formula conjunction(Formula left, Formula right);
  static Formula disjunction(Formula left, Formula right);

  Kind kind() const noexcept { return kind_; }
  std::size_t variable_index() const { return variable_; }
  const Formula& operand(std::size_t k) const { return operands_.at(k); }

  // Number of not/and/or occurrences.
  std::size_t operator_count() const;
  // Bit j is the value under assignment j, where variable v is (j >> v) & 1.
  std::uint64_t truth_table() const;
  // Fully parenthesized: "a", "( not a )", "( a and ( not b ) )".
  std::vector<std::string> tokens() const;
  std::string str() const;

 private:
  Kind kind_ = Kind::kVariable;
  std::size_t variable_ = 0;
  std::vector<Formula> operands_;
};

// Accepts the fully parenthesized form plus bare "not x" prefixes.
// Throws ParseError whose position is the offending token index.
Formula parse_formula(std::span<const std::string> tokens);
Formula parse_formula(std::string_view text);

Relation relation_of(std::uint64_t first, std::uint64_t second);
Relation logic_relation_oracle(const Formula& first, const Formula& second);
Relation logic_relation_oracle(std::string_view first, std::string_view second);

// A formula with exactly `operators` operators.
Formula random_formula(std::size_t operators, Rng& rng);

struct LogicSample {
  std::vector<std::string> first;
  std::vector<std::string> second;
  Relation label = Relation::kIndependence;
  std::size_t first_operators = 0;
  std::size_t second_operators = 0;

  // Test buckets are keyed by the longer side's operator count.
  std::size_t bucket() const { return std::max(first_operators, second_operators); }
};

struct LogicConfig {
  std::size_t train_size = 10000;   // before the validation split
  std::size_t test_per_bucket = 500;
  std::size_t max_ops_train = 6;
  std::size_t max_ops_test = 12;
  double label_cap = 0.4;
  double valid_fraction = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LogicDataset {
  std::vector<LogicSample> train;
  std::vector<LogicSample> valid;
  std::map<std::size_t, std::vector<LogicSample>> test;  // buckets 1..max_ops_test
  // Splits where the label cap could not be met and was lifted.
  std::vector<std::string> cap_lifted;
};

// Pairs are drawn by picking a bucket uniformly, giving one side exactly that
// many operators and the other side up to as many. No label may exceed
// label_cap of a split (train pool or test bucket); if the cap cannot be met
// it is lifted for that split and the split is named in cap_lifted.
LogicDataset logic_generate(const LogicConfig& config);

}  // namespace onlstm
