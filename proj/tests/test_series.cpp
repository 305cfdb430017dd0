// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "bfactory/series.hpp"

namespace bfactory {
namespace {

// Truncated power series in u = 1 - p with exact rational coefficients.
// Index 0 is the constant term. These are the oracles: every catalog entry
// is checked against a direct expansion of its closed form in u.
using Poly = std::vector<Rational>;
constexpr std::size_t kDegree = 14;

Poly mul(const Poly& a, const Poly& b) {
  Poly out(kDegree + 1, Rational(0));
  for (std::size_t i = 0; i <= kDegree; ++i) {
    for (std::size_t j = 0; i + j <= kDegree; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

Poly scaled(Poly a, const Rational& s) {
  for (auto& x : a) x *= s;
  return a;
}

Poly add(Poly a, const Poly& b) {
  for (std::size_t i = 0; i <= kDegree; ++i) a[i] += b[i];
  return a;
}

// a / b for b[0] != 0.
Poly divide(const Poly& a, const Poly& b) {
  Poly q(kDegree + 1, Rational(0));
  for (std::size_t k = 0; k <= kDegree; ++k) {
    Rational r = a[k];
    for (std::size_t j = 1; j <= k; ++j) r -= b[j] * q[k - j];
    q[k] = r / b[0];
  }
  return q;
}

// S(u) = 1 - sqrt(1 - u) from the generalized binomial theorem.
Poly binomial_complement(const Rational& a) {
  Poly s(kDegree + 1, Rational(0));
  Rational binom = 1;  // binom(a, k)
  for (std::size_t k = 1; k <= kDegree; ++k) {
    binom *= (a - Rational(static_cast<long>(k) - 1)) / Rational(static_cast<long>(k));
    s[k] = (k % 2 == 1) ? Rational(binom) : Rational(-binom);
  }
  return s;
}

// sum_{m >= 1} w_m X^m with X having no constant term.
Poly compose_power_sum(const Poly& x, const std::vector<Rational>& weights) {
  Poly out(kDegree + 1, Rational(0));
  Poly power(kDegree + 1, Rational(0));
  power[0] = 1;
  for (std::size_t m = 1; m < weights.size(); ++m) {
    power = mul(power, x);
    out = add(out, scaled(power, weights[m]));
  }
  return out;
}

void expect_matches(const CoefficientSeries& c, const Poly& oracle, std::size_t upto = kDegree) {
  for (std::size_t k = 1; k <= upto; ++k) {
    EXPECT_EQ(c.coefficient_at(k), Interval(oracle[k])) << c.expression() << " k=" << k;
  }
}

TEST(Catalog, SqrtLiteralCoefficients) {
  const SeriesPtr c = sqrt_series();
  const Rational expected[] = {ratio(1, 2), ratio(1, 8), ratio(1, 16), ratio(5, 128), ratio(7, 256)};
  for (std::size_t k = 1; k <= 5; ++k) EXPECT_EQ(c->coefficient_at(k).lo(), expected[k - 1]);
  expect_matches(*c, binomial_complement(ratio(1, 2)));
}

TEST(Catalog, PowerMatchesGeneralizedBinomial) {
  for (const Rational& a : {ratio(1, 3), ratio(3, 10), ratio(7, 10), ratio(1, 2), ratio(99, 100)}) {
    expect_matches(*power_series(a), binomial_complement(a));
  }
}

TEST(Catalog, MobiusSqrtMatchesSeriesDivision) {
  // 1 - 2s/(1+s) = (1-s)/(1+s) = S / (2 - S).
  const Poly s = binomial_complement(ratio(1, 2));
  Poly two_minus_s = scaled(s, Rational(-1));
  two_minus_s[0] += 2;
  expect_matches(*mobius_sqrt_series(), divide(s, two_minus_s));
}

TEST(Catalog, EntropyMatchesSeriesProduct) {
  // 1 - (1-u)(1 - ln(1-u)) with -ln(1-u) = sum u^k / k.
  Poly minus_log(kDegree + 1, Rational(0));
  for (std::size_t k = 1; k <= kDegree; ++k) minus_log[k] = ratio(1, k);
  Poly one_plus = minus_log;
  one_plus[0] = 1;
  Poly one_minus_u(kDegree + 1, Rational(0));
  one_minus_u[0] = 1;
  one_minus_u[1] = -1;
  Poly f = mul(one_minus_u, one_plus);
  Poly oracle = scaled(f, Rational(-1));
  oracle[0] += 1;
  expect_matches(*entropy_series(), oracle);
}

TEST(Catalog, Log2SqrtRawCoefficientsFromLogExpansion) {
  // 1 - log2(1+s) = -ln(1 - S/2) / ln 2 = (1/ln 2) sum_m (S/2)^m / m.
  const Poly half_s = scaled(binomial_complement(ratio(1, 2)), ratio(1, 2));
  std::vector<Rational> weights(kDegree + 1, Rational(0));
  for (std::size_t m = 1; m <= kDegree; ++m) weights[m] = ratio(1, m);
  const Poly raw = compose_power_sum(half_s, weights);
  const SeriesPtr c = log2_sqrt_series();
  for (std::size_t k = 1; k <= kDegree; ++k) {
    EXPECT_EQ(detail::log_sqrt_raw_coefficient(k), raw[k]) << k;
    const Interval enclosure = c->coefficient_at(k) * ln2(512);
    EXPECT_TRUE(enclosure.contains(raw[k])) << k;
    EXPECT_LT(c->coefficient_at(k).width(), Rational(1, 1 << 30));
  }
}

TEST(Catalog, ExpSqrtRawCoefficientsFromExponentialExpansion) {
  // 1 - (1 - e^{-s})/(1 - e^{-1}) = (e^{S} - 1)/(e - 1) with S = 1 - s.
  const Poly s = binomial_complement(ratio(1, 2));
  std::vector<Rational> weights(kDegree + 1, Rational(0));
  BigInt factorial = 1;
  for (std::size_t m = 1; m <= kDegree; ++m) {
    factorial *= static_cast<unsigned long>(m);
    weights[m] = Rational(BigInt(1), factorial);
  }
  const Poly raw = compose_power_sum(s, weights);
  const SeriesPtr c = exp_sqrt_series();
  const auto* exp = dynamic_cast<const detail::ExpSqrtSeries*>(c.get());
  ASSERT_NE(exp, nullptr);
  EXPECT_EQ(exp->bessel_at_one(0), 1);
  EXPECT_EQ(exp->bessel_at_one(1), 2);
  EXPECT_EQ(exp->bessel_at_one(2), 7);
  EXPECT_EQ(exp->bessel_at_one(3), 37);
  for (std::size_t k = 1; k <= kDegree; ++k) {
    EXPECT_EQ(exp->raw_coefficient(k), raw[k]) << k;
    EXPECT_TRUE((c->coefficient_at(k) * e_minus_one(512)).contains(raw[k])) << k;
  }
}

TEST(Catalog, FastBoundsEncloseExactCoefficients) {
  for (const SeriesPtr& c : {sqrt_series(), mobius_sqrt_series(), entropy_series(),
                             log2_sqrt_series(), exp_sqrt_series(), power_series(ratio(1, 3))}) {
    for (std::size_t k = 1; k <= 200; k += 7) {
      const Bounds b = c->coefficient_bounds(k);
      const Interval x = c->coefficient_at(k);
      EXPECT_LE(Rational(b.lo), x.lo()) << c->expression() << " k=" << k;
      EXPECT_GE(Rational(b.hi), x.hi()) << c->expression() << " k=" << k;
      EXPECT_TRUE(c->partial_sum_bounds(k).contains(c->partial_sum_at(k).midpoint()));
    }
  }
}

TEST(Catalog, LookupAndErrors) {
  EXPECT_EQ(catalog("sqrt")->expression(), "sqrt");
  const Rational a[] = {ratio(1, 3)};
  EXPECT_EQ(catalog("power", a)->expression(), "power:a=1/3");
  EXPECT_THROW(catalog("power"), DomainError);
  EXPECT_THROW(catalog("nope"), DomainError);
  EXPECT_THROW(power_series(Rational(0)), DomainError);
  EXPECT_THROW(power_series(Rational(1)), DomainError);
  EXPECT_THROW(finite_series({ratio(1, 2)}), DomainError);
  EXPECT_THROW(finite_series({ratio(1, 2), ratio(2, 3)}), DomainError);
  EXPECT_THROW(finite_series({Rational(-1, 2), ratio(3, 2)}), DomainError);
  EXPECT_THROW(finite_series({}), DomainError);
  EXPECT_THROW(compose(sqrt_series(), sqrt_series(), 0), DomainError);
  EXPECT_THROW(convex_combination(sqrt_series(), sqrt_series(), Rational(1)), DomainError);
  EXPECT_THROW(sqrt_series()->coefficient_at(0), DomainError);
}

TEST(Combinators, ComposeSqrtSqrtIsQuarterPower) {
  const SeriesPtr quarter = compose(sqrt_series(), sqrt_series(), 32);
  expect_matches(*quarter, binomial_complement(ratio(1, 4)));
  const SeriesPtr target = power_series(ratio(1, 4));
  for (std::size_t k = 1; k <= 32; ++k) {
    EXPECT_EQ(quarter->coefficient_at(k), target->coefficient_at(k)) << k;
  }
}

TEST(Combinators, ComposeWithIdentityIsIdentity) {
  const SeriesPtr base = entropy_series();
  const SeriesPtr left = compose(identity_series(), base, 16);
  const SeriesPtr right = compose(base, identity_series(), 16);
  for (std::size_t k = 1; k <= 16; ++k) {
    EXPECT_EQ(left->coefficient_at(k), base->coefficient_at(k));
    EXPECT_EQ(right->coefficient_at(k), base->coefficient_at(k));
  }
}

TEST(Combinators, ProductComplementAndConvexExamples) {
  // 1 - (1-p)(1-p) = 1 - u^2.
  const SeriesPtr pc = product_complement(identity_series(), identity_series());
  EXPECT_EQ(pc->coefficient_at(1).lo(), 0);
  EXPECT_EQ(pc->coefficient_at(2).lo(), 1);
  EXPECT_EQ(pc->terminal_index(), 2u);
  // (1 - f1)(1 - f2) as a product of u-series.
  const SeriesPtr mixed = product_complement(sqrt_series(), entropy_series());
  Poly s = binomial_complement(ratio(1, 2));
  Poly e(kDegree + 1, Rational(0));
  for (std::size_t k = 1; k <= kDegree; ++k) e[k] = entropy_series()->coefficient_at(k).lo();
  expect_matches(*mixed, mul(s, e));
  // alpha c1 + (1 - alpha) c2.
  const SeriesPtr cv = convex_combination(sqrt_series(), finite_series({ratio(1, 2), ratio(1, 2)}),
                                          ratio(1, 4));
  EXPECT_EQ(cv->coefficient_at(1).lo(), ratio(1, 4) * ratio(1, 2) + ratio(3, 4) * ratio(1, 2));
  EXPECT_EQ(cv->coefficient_at(3).lo(), ratio(1, 4) * ratio(1, 16));
}

TEST(Stopping, ClosedFormsMatchGenericDerivation) {
  // convex(c, c, 1/2) has the same coefficients as c but no closed-form hint,
  // so d_k comes from c_k / (1 - S_{k-1}).
  for (const SeriesPtr& c : {sqrt_series(), mobius_sqrt_series(), entropy_series(),
                             power_series(ratio(2, 7))}) {
    const StoppingPtr hinted = stopping_from_coefficients(c);
    const StoppingPtr generic = stopping_from_coefficients(convex_combination(c, c, ratio(1, 2)));
    for (std::size_t k = 1; k <= 40; ++k) {
      EXPECT_EQ(hinted->d_at(k), generic->d_at(k)) << c->expression() << " k=" << k;
    }
  }
  const StoppingPtr sq = stopping_from_coefficients(sqrt_series());
  EXPECT_EQ(sq->d_at(1).lo(), ratio(1, 2));
  EXPECT_EQ(sq->d_at(5).lo(), ratio(1, 10));
  const StoppingPtr en = stopping_from_coefficients(entropy_series());
  EXPECT_EQ(en->d_at(1).lo(), 0);
  EXPECT_EQ(en->d_at(4).lo(), ratio(1, 4));
}

TEST(Stopping, FiniteSeriesTerminates) {
  const StoppingPtr d = stopping_from_coefficients(finite_series({ratio(1, 4), ratio(1, 4), ratio(1, 2)}));
  EXPECT_EQ(d->d_at(1).lo(), ratio(1, 4));
  EXPECT_EQ(d->d_at(2).lo(), ratio(1, 3));
  EXPECT_EQ(d->d_at(3).lo(), 1);
  EXPECT_THROW(d->d_at(4), UndefinedIndex);
  EXPECT_THROW(d->d_at(0), DomainError);
  EXPECT_TRUE(d->fast_at(3).is_one);
}

TEST(Stopping, RoundTripIsIdentity) {
  for (const SeriesPtr& c : {sqrt_series(), mobius_sqrt_series(), entropy_series(),
                             power_series(ratio(1, 3)),
                             finite_series({ratio(1, 4), Rational(0), ratio(3, 4)}),
                             compose(sqrt_series(), entropy_series(), 64)}) {
    const SeriesPtr back = coefficients_from_stopping(stopping_from_coefficients(c));
    const std::size_t last = c->terminal_index().value_or(64);
    for (std::size_t k = 1; k <= last; ++k) {
      EXPECT_EQ(back->coefficient_at(k), c->coefficient_at(k)) << c->expression() << " k=" << k;
    }
  }
}

TEST(Stopping, RuleBasedSequence) {
  // d_k = 1/2 gives c_k = 2^{-k}, i.e. f(p) = 1 - (1-p)/(1+p) = 2p/(1+p).
  const StoppingPtr d = stopping_from_rule([](std::size_t) { return ratio(1, 2); }, std::nullopt, "half");
  const SeriesPtr c = coefficients_from_stopping(d);
  for (std::size_t k = 1; k <= 20; ++k) {
    EXPECT_EQ(c->coefficient_at(k).lo(), Rational(BigInt(1), BigInt(1) << static_cast<unsigned>(k)));
  }
  const StoppingPtr bad = stopping_from_rule([](std::size_t) { return Rational(3, 2); }, std::nullopt, "bad");
  EXPECT_THROW(bad->d_at(1), DomainError);
  const StoppingPtr unfinished = stopping_from_rule([](std::size_t) { return ratio(1, 2); }, 2, "x");
  EXPECT_THROW(unfinished->d_at(2), InconsistentSeries);
}

TEST(Stopping, TrackedPrecisionEnclosuresShrink) {
  const StoppingPtr d = stopping_from_coefficients(log2_sqrt_series());
  const Interval coarse = d->d_at(3, 128);
  const Interval fine = d->d_at(3, 1024);
  EXPECT_TRUE(coarse.contains(fine.midpoint()));
  EXPECT_LT(fine.width(), coarse.width());
  EXPECT_GT(fine.lo(), 0);
  EXPECT_LT(fine.hi(), 1);
}

TEST(Concurrency, ParallelFirstAccessAgreesWithSequential) {
  const SeriesPtr reference = compose(sqrt_series(), exp_sqrt_series(), 48);
  std::vector<Interval> expected;
  for (std::size_t k = 1; k <= 48; ++k) expected.push_back(reference->coefficient_at(k));
  const SeriesPtr shared = compose(sqrt_series(), exp_sqrt_series(), 48);
  std::vector<std::thread> pool;
  std::vector<int> mismatches(8, 0);
  for (int t = 0; t < 8; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = 0; i < 48; ++i) {
        const std::size_t k = (t % 2 == 0) ? 48 - i : i + 1;
        if (!(shared->coefficient_at(k) == expected[k - 1])) ++mismatches[t];
        shared->coefficient_bounds(k);
      }
    });
  }
  for (auto& th : pool) th.join();
  for (int m : mismatches) EXPECT_EQ(m, 0);
}

}  // namespace
}  // namespace bfactory
