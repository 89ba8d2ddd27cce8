#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/error.hpp"
#include "policylab/json_util.hpp"

namespace policylab::metasim {

// Criterion grammar (ASCII, keywords upper-case):
//   expr  := or
//   or    := and ("OR" and)*
//   and   := unary ("AND" unary)*
//   unary := "NOT" unary | "(" expr ")" | cmp
//   cmp   := term relop term          (non-associative)
//   relop := "<" | "<=" | ">" | ">=" | "==" | "!="
//   term  := NUMBER | IDENT | agg "(" IDENT ")"
//   agg   := "avg" | "min" | "max"

enum class Aggregate { avg, min, max };
enum class RelOp { lt, le, gt, ge, eq, ne };

struct Term {
  enum class Kind { number, parameter, aggregate };
  Kind kind = Kind::number;
  double number = 0.0;
  std::string name;  // parameter or attribute name
  Aggregate aggregate = Aggregate::avg;

  bool operator==(const Term&) const = default;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { compare, conjunction, disjunction, negation };
  Kind kind = Kind::compare;
  Term lhs;
  RelOp op = RelOp::lt;
  Term rhs;
  ExprPtr left;   // conjunction / disjunction / negation operand
  ExprPtr right;  // conjunction / disjunction
};

bool structurally_equal(const Expr& a, const Expr& b);

/// Canonical text: single spaces, minimal parentheses, shortest round-trip numbers.
std::string print(const Expr& expr);

struct Criterion {
  std::string source;
  ExprPtr root;
};

/// Parse failure with the byte offset of the offending token and the set of
/// tokens the parser would have accepted there. An unexpected end of input
/// is reported at the last non-blank character.
class CriterionParseError : public Error {
 public:
  CriterionParseError(std::size_t offset, std::vector<std::string> expected, std::string found);

  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }
  const std::string& found() const { return found_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
  std::string found_;
};

Criterion parse_criterion(std::string_view text);

struct AggregateStats {
  double avg = 0.0;
  double min = 0.0;
  double max = 0.0;

  bool operator==(const AggregateStats&) const = default;
};

using AggregateSet = std::map<std::string, AggregateStats, std::less<>>;

/// Aggregate references resolve against `aggregates`, bare identifiers
/// against the numeric entries of `params`. Throws Error(UnknownAttribute)
/// or Error(UnknownParameter).
bool evaluate_criterion(const Criterion& criterion, const AggregateSet& aggregates, const Json& params);

}  // namespace policylab::metasim
