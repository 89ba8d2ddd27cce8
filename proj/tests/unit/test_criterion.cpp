#include <gtest/gtest.h>

#include <random>

#include "policylab/criterion.hpp"
#include "support/criterion_gen.hpp"

using namespace policylab;
using namespace policylab::metasim;

namespace {

std::size_t error_offset(const std::string& text) {
  try {
    parse_criterion(text);
  } catch (const CriterionParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "parsed: " << text;
  return SIZE_MAX;
}

}  // namespace

TEST(Criterion, QuotedConjunction) {
  const auto c = parse_criterion("avg(radicals) < avg(sympathizers) AND avg(sympathizers) < avg(conformists)");
  ASSERT_EQ(c.root->kind, Expr::Kind::conjunction);
  const auto& l = *c.root->left;
  EXPECT_EQ(l.kind, Expr::Kind::compare);
  EXPECT_EQ(l.lhs.kind, Term::Kind::aggregate);
  EXPECT_EQ(l.lhs.name, "radicals");
  EXPECT_EQ(l.op, RelOp::lt);
  EXPECT_EQ(c.root->right->rhs.name, "conformists");
}

TEST(Criterion, ParameterReference) {
  const auto c = parse_criterion("avg(restricted) <= max_monitored_fraction");
  EXPECT_EQ(c.root->kind, Expr::Kind::compare);
  EXPECT_EQ(c.root->op, RelOp::le);
  EXPECT_EQ(c.root->rhs.kind, Term::Kind::parameter);
  EXPECT_EQ(c.root->rhs.name, "max_monitored_fraction");
}

TEST(Criterion, TruncatedComparison) {
  EXPECT_EQ(error_offset("avg(x) <"), 7u);
  try {
    parse_criterion("avg(x) <");
  } catch (const CriterionParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::CriterionParseError);
    EXPECT_NE(std::find(e.expected().begin(), e.expected().end(), "NUMBER"), e.expected().end());
  }
}

TEST(Criterion, Precedence) {
  const auto c = parse_criterion("a < 1 OR b < 2 AND NOT c < 3");
  ASSERT_EQ(c.root->kind, Expr::Kind::disjunction);
  ASSERT_EQ(c.root->right->kind, Expr::Kind::conjunction);
  EXPECT_EQ(c.root->right->right->kind, Expr::Kind::negation);
  EXPECT_EQ(print(*c.root), "a < 1 OR b < 2 AND NOT c < 3");
  EXPECT_EQ(print(*parse_criterion("(a < 1 OR b < 2) AND c < 3").root), "(a < 1 OR b < 2) AND c < 3");
  EXPECT_EQ(print(*parse_criterion("a < 1 AND (b < 2 AND c < 3)").root), "a < 1 AND (b < 2 AND c < 3)");
  EXPECT_EQ(print(*parse_criterion("((a < 1)) AND b<2").root), "a < 1 AND b < 2");
  EXPECT_EQ(print(*parse_criterion("NOT (a < 1 AND b < 2)").root), "NOT (a < 1 AND b < 2)");
}

TEST(Criterion, NumbersPrintShortest) {
  EXPECT_EQ(print(*parse_criterion("x < 0.10").root), "x < 0.1");
  EXPECT_EQ(print(*parse_criterion("x >= -2.5e3").root), "x >= -2500");
  EXPECT_EQ(print(*parse_criterion("1e-7 != x").root), "1e-07 != x");
}

TEST(Criterion, Evaluate) {
  const AggregateSet agg{{"radicals", {0.1, 0.0, 0.2}}, {"sympathizers", {0.3, 0.3, 0.3}}};
  EXPECT_TRUE(evaluate_criterion(parse_criterion("avg(radicals) < avg(sympathizers)"), agg, Json::object()));
  EXPECT_TRUE(evaluate_criterion(parse_criterion("NOT (min(radicals) > 0)"), agg, Json::object()));
  EXPECT_TRUE(evaluate_criterion(parse_criterion("max(radicals) <= cap"), agg, Json{{"cap", 0.2}}));
  EXPECT_FALSE(evaluate_criterion(parse_criterion("max(radicals) < cap OR 1 == 2"), agg, Json{{"cap", 0.2}}));
}

TEST(Criterion, EvaluationErrors) {
  const AggregateSet agg{{"radicals", {0.1, 0.0, 0.2}}};
  try {
    evaluate_criterion(parse_criterion("avg(ghosts) < 1"), agg, Json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownAttribute);
  }
  try {
    evaluate_criterion(parse_criterion("avg(radicals) < limit"), agg, Json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownParameter);
  }
  // Errors surface even where short-circuiting would have skipped them.
  EXPECT_THROW(evaluate_criterion(parse_criterion("1 < 2 OR avg(ghosts) < 1"), agg, Json::object()), Error);
}

TEST(Criterion, ErrorOffsets) {
  EXPECT_EQ(error_offset(""), 0u);
  EXPECT_EQ(error_offset("a < b < c"), 6u);
  EXPECT_EQ(error_offset("avg x) < 1"), 4u);
  EXPECT_EQ(error_offset("a < 1 and b < 2"), 6u);
  EXPECT_EQ(error_offset("(a < 1"), 5u);
  EXPECT_EQ(error_offset("a = 1"), 2u);
  EXPECT_EQ(error_offset("avg(min) < 1"), 4u);
}

TEST(CriterionProperty, RoundTrip) {
  std::mt19937_64 gen(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto text = criterion_gen::expression(gen, 4);
    const auto first = parse_criterion(text);
    const auto printed = print(*first.root);
    const auto second = parse_criterion(printed);
    ASSERT_TRUE(structurally_equal(*first.root, *second.root)) << text << " => " << printed;
    EXPECT_EQ(print(*second.root), printed);
  }
}
