// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "bfactory/numeric.hpp"
#include "bfactory/stats.hpp"

namespace bfactory {
namespace {

TEST(ParseRational, AcceptsIntegersFractionsAndDecimals) {
  EXPECT_EQ(parse_rational("3"), Rational(3));
  EXPECT_EQ(parse_rational("6/8"), ratio(3, 4));
  EXPECT_EQ(parse_rational("0.3"), ratio(3, 10));
  EXPECT_EQ(parse_rational("2.5e-1"), ratio(1, 4));
  EXPECT_EQ(parse_rational("-1.5"), Rational(-3, 2));
  EXPECT_EQ(parse_rational("1E3"), Rational(1000));
}

TEST(ParseRational, RejectsMalformedText) {
  for (const char* bad : {"", "a", "1/", "/2", "1.2.3", "1e", "1/0", "0.5/2", "--1"}) {
    EXPECT_THROW(parse_rational(bad), DomainError) << bad;
  }
}

TEST(Scaling, FloorAndCeilAtBinaryPrecision) {
  const Rational third = ratio(1, 3);
  // 2^8 / 3 = 85.33
  EXPECT_EQ(floor_scaled(third, 8), BigInt(85));
  EXPECT_EQ(ceil_scaled(third, 8), BigInt(86));
  EXPECT_EQ(floor_scaled(ratio(3, 4), 2), BigInt(3));
  EXPECT_EQ(ceil_scaled(ratio(3, 4), 2), BigInt(3));
  EXPECT_EQ(from_scaled(BigInt(3), 2), ratio(3, 4));
}

TEST(Conversion, DirectedAndNearestDoubles) {
  EXPECT_EQ(to_double_nearest(parse_rational("0.1")), 0.1);
  EXPECT_EQ(to_double_nearest(ratio(1, 3)), 1.0 / 3.0);
  EXPECT_EQ(to_double_nearest(parse_rational("0.9")), 0.9);
  EXPECT_EQ(to_double_nearest(ratio(3, 4)), 0.75);
  const Rational third = ratio(1, 3);
  EXPECT_LT(Rational(to_double_down(third)), third);
  EXPECT_GT(Rational(to_double_up(third)), third);
  EXPECT_EQ(std::nextafter(to_double_down(third), 1.0), to_double_up(third));
}

TEST(Scaling, DyadicExponent) {
  EXPECT_EQ(dyadic_exponent(ratio(3, 4)), 2);
  EXPECT_EQ(dyadic_exponent(Rational(1)), 0);
  EXPECT_EQ(dyadic_exponent(Rational(0)), 0);
  EXPECT_EQ(dyadic_exponent(ratio(1, 3)), -1);
  EXPECT_EQ(dyadic_exponent(ratio(5, 1024)), 10);
}

TEST(IntervalArithmetic, ExactOperationsStayDegenerate) {
  const Interval a(ratio(1, 3));
  const Interval b(ratio(1, 6));
  EXPECT_TRUE((a + b).is_exact());
  EXPECT_EQ((a + b).lo(), ratio(1, 2));
  EXPECT_EQ((a - b).lo(), ratio(1, 6));
  EXPECT_EQ((a * b).lo(), ratio(1, 18));
  EXPECT_EQ((a / b).lo(), Rational(2));
}

TEST(IntervalArithmetic, RoundingIsOutwardAndDivisionByZeroRefused) {
  const Interval third(ratio(1, 3));
  const Interval r = third.rounded(10);
  EXPECT_FALSE(r.is_exact());
  EXPECT_TRUE(r.contains(ratio(1, 3)));
  EXPECT_LE(r.width(), Rational(1, 512));
  const Interval around_zero(Rational(-1, 10), Rational(1, 10));
  EXPECT_THROW(Interval(Rational(1)) / around_zero, InsufficientPrecision);
}

TEST(Constants, Ln2AndEMinusOneEnclosuresMatchKnownDigits) {
  // 50 published digits of each constant.
  const Rational ln2_digits = parse_rational("0.69314718055994530941723212145817656807550013436025");
  const Rational e1_digits = parse_rational("1.71828182845904523536028747135266249775724709369995");
  const Rational slack = parse_rational("1e-50");
  for (unsigned bits : {64u, 256u, 1024u}) {
    const Interval l = ln2(bits);
    const Interval e = e_minus_one(bits);
    EXPECT_LE(l.lo(), ln2_digits + slack);
    EXPECT_GE(l.hi(), ln2_digits - slack);
    EXPECT_LE(e.lo(), e1_digits + slack);
    EXPECT_GE(e.hi(), e1_digits - slack);
    EXPECT_LE(l.width(), from_scaled(BigInt(4), bits));
    EXPECT_LE(e.width(), from_scaled(BigInt(4), bits));
  }
}

TEST(BoundsArithmetic, EnclosesRealResult) {
  const Bounds a = Bounds::of(ratio(1, 3));
  const Bounds b = Bounds::of(ratio(2, 7));
  EXPECT_TRUE((a * b).contains(ratio(2, 21)));
  EXPECT_TRUE((a + b).contains(ratio(13, 21)));
  EXPECT_TRUE((a - b).contains(ratio(1, 21)));
  EXPECT_TRUE((a / b).contains(ratio(7, 6)));
}

TEST(FixedPoint, SixtyFourBitBounds) {
  EXPECT_EQ(floor_fixed64(0.5), std::uint64_t{1} << 63);
  EXPECT_EQ(ceil_fixed64(0.5), std::uint64_t{1} << 63);
  EXPECT_EQ(floor_fixed64(0.0), 0u);
  EXPECT_EQ(ceil_fixed64(1.0), std::numeric_limits<std::uint64_t>::max());
}

TEST(Stats, WilsonIntervalKnownValue) {
  // 40 of 100 at 95%: [0.3094, 0.4980] (standard textbook value).
  const auto r = stats::wilson_interval(40, 100, 0.95);
  EXPECT_NEAR(r.lo, 0.3094, 1e-4);
  EXPECT_NEAR(r.hi, 0.4980, 1e-4);
}

TEST(Stats, NormalQuantileAndChiSquare) {
  EXPECT_NEAR(stats::normal_quantile(0.95), 1.959964, 1e-6);
  EXPECT_NEAR(stats::normal_quantile(0.9999), 3.890592, 1e-6);
  // Perfect fit: statistic 0, p-value 1.
  const auto perfect = stats::chi_square_gof({25, 25, 50}, {0.25, 0.25, 0.5});
  EXPECT_DOUBLE_EQ(perfect.statistic, 0.0);
  EXPECT_NEAR(perfect.p_value, 1.0, 1e-12);
  // chi2 = (60-50)^2/50 + (40-50)^2/50 = 4 on 1 dof, p = 0.0455.
  const auto skew = stats::chi_square_gof({60, 40}, {0.5, 0.5});
  EXPECT_NEAR(skew.statistic, 4.0, 1e-12);
  EXPECT_NEAR(skew.p_value, 0.0455003, 1e-6);
  // Remainder cell built from the trial count.
  const auto rest = stats::chi_square_gof({60}, {0.5}, 100);
  EXPECT_NEAR(rest.statistic, 4.0, 1e-12);
}

TEST(Stats, TwoProportionAndLogLogFit) {
  EXPECT_DOUBLE_EQ(stats::two_proportion_z(50, 100, 50, 100), 0.0);
  EXPECT_GT(stats::two_proportion_z(70, 100, 50, 100), 2.5);
  const std::vector<double> x = {0.5, 0.25, 0.125, 0.0625};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -0.7));
  EXPECT_NEAR(stats::loglog_fit(x, y).slope, -0.7, 1e-12);
}

}  // namespace
}  // namespace bfactory
