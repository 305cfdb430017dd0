// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Estimators and tests used by the Monte Carlo harness.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "bfactory/errors.hpp"
#include "bfactory/numeric.hpp"

namespace bfactory::stats {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Two-sided standard normal quantile for a confidence level in (0,1).
inline double normal_quantile(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw DomainError("confidence must lie in (0,1)");
  }
  const boost::math::normal_distribution<double> unit;
  return boost::math::quantile(unit, 1.0 - (1.0 - confidence) / 2.0);
}

/// Wilson score interval for a binomial proportion.
inline Range wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (trials == 0) return {0.0, 1.0};
  const double z = normal_quantile(confidence);
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (phat + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z / (1 + z2 / n) * std::sqrt(phat * (1 - phat) / n + z2 / (4 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Normal-approximation interval for a mean.
inline Range mean_interval(double mean, double standard_error, double confidence) {
  const double z = normal_quantile(confidence);
  return {mean - z * standard_error, mean + z * standard_error};
}

/// Distance from x to [lo, hi] in units of `scale`; 0 inside. A zero scale
/// gives 0 inside and infinity outside.
inline double z_distance(double x, Bounds target, double scale) {
  const double gap = x < target.lo ? target.lo - x : (x > target.hi ? x - target.hi : 0.0);
  if (gap == 0.0) return 0.0;
  if (!(scale > 0.0)) return std::numeric_limits<double>::infinity();
  return (x < target.lo ? -gap : gap) / scale;
}

/// z-score of an observed proportion against a hypothesised probability
/// enclosure, using the binomial standard error at the nearest hypothesised
/// value.
inline double proportion_z(std::uint64_t successes, std::uint64_t trials, Bounds expected) {
  if (trials == 0) return 0.0;
  const double phat = static_cast<double>(successes) / static_cast<double>(trials);
  const double p0 = std::clamp(phat, std::max(expected.lo, 0.0), std::min(expected.hi, 1.0));
  const double se = std::sqrt(p0 * (1.0 - p0) / static_cast<double>(trials));
  return z_distance(phat, expected, se);
}

/// Pooled two-proportion z statistic.
inline double two_proportion_z(std::uint64_t x1, std::uint64_t n1, std::uint64_t x2,
                               std::uint64_t n2) {
  if (n1 == 0 || n2 == 0) throw DomainError("two-proportion test needs non-empty samples");
  const double a = static_cast<double>(n1);
  const double b = static_cast<double>(n2);
  const double p1 = static_cast<double>(x1) / a;
  const double p2 = static_cast<double>(x2) / b;
  const double pooled = static_cast<double>(x1 + x2) / (a + b);
  const double se = std::sqrt(pooled * (1 - pooled) * (1 / a + 1 / b));
  if (se == 0.0) return p1 == p2 ? 0.0 : std::numeric_limits<double>::infinity();
  return (p1 - p2) / se;
}

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness of fit of counts against cell probabilities. When
/// `trials` exceeds the listed counts, the unlisted outcomes form one
/// remainder cell with the leftover probability.
inline ChiSquareResult chi_square_gof(const std::vector<std::uint64_t>& observed,
                                      const std::vector<double>& probabilities,
                                      std::uint64_t trials = 0) {
  if (observed.size() != probabilities.size() || observed.empty()) {
    throw DomainError("chi-square: mismatched or empty cells");
  }
  std::uint64_t listed = 0;
  for (auto o : observed) listed += o;
  const std::uint64_t total = std::max(trials, listed);
  if (total == 0) throw DomainError("chi-square: no observations");
  std::vector<std::uint64_t> obs = observed;
  std::vector<double> prob = probabilities;
  double mass = 0.0;
  for (double q : prob) mass += q;
  if (total > listed || mass < 1.0 - 1e-12) {
    prob.push_back(std::max(0.0, 1.0 - mass));
    obs.push_back(total - listed);
  }
  ChiSquareResult r;
  const double n = static_cast<double>(total);
  std::size_t cells = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (prob[i] <= 0.0) {
      if (obs[i] > 0) r.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    const double e = n * prob[i];
    const double d = static_cast<double>(obs[i]) - e;
    r.statistic += d * d / e;
    ++cells;
  }
  r.dof = cells > 1 ? cells - 1 : 1;
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(r.dof));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

/// Two-sample chi-square test of homogeneity over aligned histogram cells.
/// Cells where both samples are sparse (< min_count combined) are pooled.
inline ChiSquareResult chi_square_homogeneity(const std::vector<std::uint64_t>& a,
                                              const std::vector<std::uint64_t>& b,
                                              std::uint64_t min_count = 25) {
  const std::size_t size = std::max(a.size(), b.size());
  auto at = [](const std::vector<std::uint64_t>& v, std::size_t i) {
    return i < v.size() ? v[i] : std::uint64_t{0};
  };
  std::vector<std::pair<std::uint64_t, std::uint64_t>> cells;
  std::pair<std::uint64_t, std::uint64_t> pending{0, 0};
  for (std::size_t i = 0; i < size; ++i) {
    pending.first += at(a, i);
    pending.second += at(b, i);
    if (pending.first + pending.second >= min_count) {
      cells.push_back(pending);
      pending = {0, 0};
    }
  }
  if (pending.first + pending.second > 0) {
    if (cells.empty()) {
      cells.push_back(pending);
    } else {
      cells.back().first += pending.first;
      cells.back().second += pending.second;
    }
  }
  double na = 0, nb = 0;
  for (auto& c : cells) {
    na += static_cast<double>(c.first);
    nb += static_cast<double>(c.second);
  }
  if (na == 0 || nb == 0) throw DomainError("chi-square: empty sample");
  ChiSquareResult r;
  const double total = na + nb;
  for (auto& c : cells) {
    const double row = static_cast<double>(c.first + c.second);
    const double ea = row * na / total;
    const double eb = row * nb / total;
    const double da = static_cast<double>(c.first) - ea;
    const double db = static_cast<double>(c.second) - eb;
    r.statistic += da * da / ea + db * db / eb;
  }
  r.dof = cells.size() > 1 ? cells.size() - 1 : 1;
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(r.dof));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

/// Least-squares slope and intercept of log(y) against log(x).
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("log-log fit needs two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw DomainError("log-log fit needs positive data");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  LineFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

/// Least-squares slope of y against x.
inline double linear_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("fit needs two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace bfactory::stats
