// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "bfactory/expression.hpp"

namespace bfactory {
namespace {

TEST(Parse, CanonicalFormsRoundTrip) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"sqrt", "sqrt"},
      {" prod( sqrt , flip_input(entropy) ) ", "prod(sqrt,flip_input(entropy))"},
      {"power:a=0.3", "power:a=3/10"},
      {"power:a=2.5e-1", "power:a=1/4"},
      {"scale(sqrt,1/2)", "scale(sqrt,alpha=1/2)"},
      {"compose(sqrt,entropy,5)", "compose(sqrt,entropy,order=5)"},
      {"convex(sqrt,entropy,alpha=1/3)", "convex(sqrt,entropy,alpha=1/3)"},
      {"baseline(sqrt,cap=100)", "baseline(sqrt,cap=100)"},
      {"baseline(log2_sqrt)", "baseline(log2_sqrt)"},
      {"finite:[1/2, 0.5]", "finite:[1/2,1/2]"},
      {"pc(sqrt,mobius_sqrt)", "pc(sqrt,mobius_sqrt)"},
      {"complement(scale(exp_sqrt,alpha=0.75))", "complement(scale(exp_sqrt,alpha=3/4))"},
  };
  for (const auto& [text, canonical] : cases) {
    const ExprPtr node = parse_expression(text);
    EXPECT_EQ(to_string(*node), canonical) << text;
    EXPECT_EQ(to_string(*parse_expression(canonical)), canonical);
  }
}

TEST(Parse, ErrorsReportOffendingPosition) {
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"sqrtx", 0},
      {"prod(sqrt)", 9},
      {"power:a=2", 8},
      {"power", 5},
      {"finite:[1/2]", 8},
      {"scale(sqrt,2)", 11},
      {"compose(sqrt,sqrt,0)", 18},
      {"baseline(prod(sqrt,sqrt))", 9},
      {"pc(sqrt,complement(sqrt))", 8},
      {"", 0},
      {"sqrt)", 4},
      {"convex(sqrt,sqrt,alpha=1)", 23},
      {"finite:[1/2,1/2", 15},
  };
  for (const auto& [text, position] : cases) {
    try {
      parse_expression(text);
      ADD_FAILURE() << "accepted '" << text << "'";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.position(), position) << text << ": " << e.what();
    }
  }
}

TEST(Parse, SeriesAndFactoryNodes) {
  EXPECT_TRUE(parse_expression("pc(sqrt,entropy)")->is_series());
  EXPECT_FALSE(parse_expression("prod(sqrt,entropy)")->is_series());
  EXPECT_THROW(build_series(*parse_expression("complement(sqrt)")), DomainError);
  const SeriesPtr c = build_series(*parse_expression("compose(sqrt,sqrt,8)"));
  EXPECT_EQ(c->coefficient_at(1).lo(), ratio(1, 4));
}

TEST(Algorithms, NamesAndFactories) {
  EXPECT_EQ(parse_algorithm("rand"), Algorithm::randomized);
  EXPECT_EQ(parse_algorithm("nonrand"), Algorithm::nonrandomized);
  EXPECT_EQ(parse_algorithm("baseline"), Algorithm::baseline);
  EXPECT_THROW(parse_algorithm("other"), DomainError);
  for (Algorithm a : {Algorithm::randomized, Algorithm::nonrandomized, Algorithm::baseline}) {
    EXPECT_EQ(parse_algorithm(to_string(a)), a);
    BuildOptions options;
    options.algorithm = a;
    const FactoryPtr f = build_factory("scale(sqrt,alpha=1/2)", options);
    ASSERT_NE(f, nullptr);
    SimulatedCoins coins(0.5, std::uint64_t{1});
    SimulatedUniforms uniforms(std::uint64_t{2});
    if (a == Algorithm::nonrandomized) {
      ForbiddenUniforms none;
      for (int i = 0; i < 1000; ++i) f->sample(coins, none);
    } else {
      for (int i = 0; i < 1000; ++i) f->sample(coins, uniforms);
    }
  }
}

TEST(ReferenceLaw, MatchesClosedForms) {
  const double p = 0.3;
  const double s = std::sqrt(p);
  struct Case {
    std::string text;
    double f;
    double en;  // negative when no expected cost is defined
  };
  const std::vector<Case> cases = {
      {"sqrt", s, s / p},
      {"complement(sqrt)", 1 - s, s / p},
      {"flip_input(sqrt)", std::sqrt(1 - p), std::sqrt(1 - p) / (1 - p)},
      // Uniform coin costs nothing; the inner factory runs with probability 1/4.
      {"scale(sqrt,alpha=1/4)", s / 4, s / p / 4},
      // E[N1] + f1 E[N2].
      {"prod(sqrt,sqrt)", p, s / p + s * s / p},
      {"baseline(sqrt)", s, -1},
  };
  for (const auto& c : cases) {
    const ReferenceLaw law = reference_law(*parse_expression(c.text), p);
    EXPECT_TRUE(law.f.contains(c.f) || std::abs(law.f.mid() - c.f) < 1e-9) << c.text;
    if (c.en < 0) {
      EXPECT_FALSE(law.expected_n.has_value()) << c.text;
    } else {
      ASSERT_TRUE(law.expected_n.has_value()) << c.text;
      EXPECT_NEAR(law.expected_n->mid(), c.en, 1e-8) << c.text;
    }
  }
}

TEST(ReferenceLaw, NonRandomizedCosts) {
  const double p = 0.4;
  const double pq = p * (1 - p);
  BuildOptions options;
  options.algorithm = Algorithm::nonrandomized;
  const ReferenceLaw law = reference_law(*parse_expression("sqrt"), p, options);
  EXPECT_NEAR(law.expected_n->mid(), std::sqrt(p) / p * (1 + 2 / pq), 1e-8);
  // Digit coin for alpha = 1/3: two fair bits on average, 1/(2pq) pairs each.
  EXPECT_TRUE(digit_coin_cost(ratio(1, 3), p, false).contains(2.0 / pq));
  EXPECT_EQ(digit_coin_cost(Rational(1), p, false).hi, 0.0);
  options.dyadic_shortcut = true;
  EXPECT_FALSE(reference_law(*parse_expression("sqrt"), p, options).expected_n.has_value());
}

}  // namespace
}  // namespace bfactory
