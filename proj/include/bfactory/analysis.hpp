// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Certified numeric evaluation of f(p) = 1 - sum c_k (1-p)^k, of f'(p), of
// the expected input counts of both factories and of the sequential
// Cramer-Rao lower bound. Every value comes with a guaranteed error bound.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "bfactory/errors.hpp"
#include "bfactory/numeric.hpp"
#include "bfactory/series.hpp"

namespace bfactory {

struct EvalResult {
  double value = 0.0;
  double error_bound = 0.0;  ///< |true - value| <= error_bound
  std::size_t terms_used = 0;

  Bounds bounds() const { return {value - error_bound, value + error_bound}; }
};

inline constexpr double kDefaultTolerance = 1e-10;
inline constexpr std::size_t kDefaultTermCap = 20'000'000;

namespace detail {

inline void check_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("p must lie in (0,1)");
}

inline void check_tolerance(double tol) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
}

inline Bounds complement_of(double p) { return Bounds::point(1.0) - Bounds::point(p); }

/// Non-negative enclosure in extended precision.
struct Wide {
  long double lo = 0.0L;
  long double hi = 0.0L;
};

inline Wide wide(Bounds b) { return {b.lo, b.hi}; }

inline Wide wide_product(Wide a, Wide b) {
  auto exact = [](const Wide& x) { return x.lo == x.hi && (x.lo == 0.0L || x.lo == 1.0L); };
  Wide r{a.lo * b.lo, a.hi * b.hi};
  if (exact(a) || exact(b)) return r;
  r.lo = r.lo > 0.0L ? std::nextafter(r.lo, 0.0L) : 0.0L;
  r.hi = std::nextafter(r.hi, HUGE_VALL);
  return r;
}

/// 1 - p; exact in extended precision unless p is tiny.
inline Wide complement_wide(double p) {
  const long double q = 1.0L - static_cast<long double>(p);
  if (1.0L - q == static_cast<long double>(p)) return {q, q};
  return {std::nextafter(q, 0.0L), std::nextafter(q, HUGE_VALL)};
}

/// Running sum of non-negative enclosures in extended precision; each
/// addition is rounded outward from its exact (TwoSum) error.
struct OutwardSum {
  long double lo = 0.0L;
  long double hi = 0.0L;

  static long double sum_error(long double a, long double b, long double s) {
    const long double bb = s - a;
    return (a - (s - bb)) + (b - bb);
  }
  void add(Wide term) {
    const long double l = lo + term.lo;
    lo = sum_error(lo, term.lo, l) < 0 ? std::nextafter(l, -HUGE_VALL) : l;
    const long double h = hi + term.hi;
    hi = sum_error(hi, term.hi, h) > 0 ? std::nextafter(h, HUGE_VALL) : h;
  }
  void add(Bounds term) { add(wide(term)); }
  long double radius() const { return (hi - lo) / 2; }
  Bounds bounds() const { return {narrow_down(lo), narrow_up(hi)}; }
};

inline EvalResult from_bounds(Bounds b, std::size_t terms) {
  EvalResult r;
  r.value = b.mid();
  r.error_bound = std::nextafter(b.radius(), INFINITY);
  r.terms_used = terms;
  return r;
}

}  // namespace detail

/// f(p), truncated once (1 - S_K)(1-p)^(K+1), which bounds the remaining
/// terms, plus accumulated rounding is within `tol`.
inline EvalResult eval_f(const CoefficientSeries& c, double p, double tol = kDefaultTolerance,
                         std::size_t term_cap = kDefaultTermCap) {
  detail::check_probability(p);
  detail::check_tolerance(tol);
  const detail::Wide q = detail::complement_wide(p);
  detail::Wide power{1.0L, 1.0L};
  detail::OutwardSum sum;
  const auto terminal = c.terminal_index();
  for (std::size_t k = 1; k <= term_cap; ++k) {
    power = detail::wide_product(power, q);
    sum.add(detail::wide_product(detail::wide(c.coefficient_bounds(k)), power));
    const double unassigned = next_up(std::max(0.0, 1.0 - c.partial_sum_bounds(k).lo));
    const bool done_terms = terminal && k >= *terminal;
    const double tail =
        done_terms ? 0.0 : detail::narrow_up(unassigned * detail::wide_product(power, q).hi * (1 + 1e-15L));
    if (tail + static_cast<double>(sum.radius()) <= tol || done_terms) {
      Bounds f = Bounds::point(1.0) - sum.bounds();
      f.lo = next_down(f.lo - tail);
      return detail::from_bounds(f.clamped(0.0, 1.0), k);
    }
  }
  throw Error("f(p) tolerance not reached within " + std::to_string(term_cap) + " terms");
}

/// f'(p) = sum k c_k (1-p)^(k-1). Since k q^(k-1) decreases for
/// k >= 1 / ln(1/q), once K + 1 passes that point the tail is at most
/// (1 - S_K)(K + 1) q^K.
inline EvalResult eval_f_prime(const CoefficientSeries& c, double p,
                               double tol = kDefaultTolerance,
                               std::size_t term_cap = kDefaultTermCap) {
  detail::check_probability(p);
  detail::check_tolerance(tol);
  const detail::Wide q = detail::complement_wide(p);
  const double monotone_from = 1.0 / -std::log1p(-p);
  detail::Wide power{1.0L, 1.0L};  // q^(k-1)
  detail::OutwardSum sum;
  const auto terminal = c.terminal_index();
  for (std::size_t k = 1; k <= term_cap; ++k) {
    const detail::Wide kc = detail::wide(Bounds::point(static_cast<double>(k)) * c.coefficient_bounds(k));
    sum.add(detail::wide_product(kc, power));
    power = detail::wide_product(power, q);  // q^k
    const bool done_terms = terminal && k >= *terminal;
    if (!done_terms && static_cast<double>(k + 1) < monotone_from) continue;
    const double unassigned = next_up(std::max(0.0, 1.0 - c.partial_sum_bounds(k).lo));
    const double tail =
        done_terms ? 0.0
                   : detail::narrow_up(unassigned * static_cast<long double>(k + 1) * power.hi *
                                       (1 + 1e-15L));
    if (tail + static_cast<double>(sum.radius()) <= tol || done_terms) {
      Bounds d = sum.bounds();
      d.hi += tail;
      return detail::from_bounds(Bounds{d.lo, std::nextafter(d.hi, INFINITY)}, k);
    }
  }
  throw Error("f'(p) tolerance not reached within " + std::to_string(term_cap) + " terms");
}

/// E[N] = f(p)/p for the randomized factory.
inline EvalResult expected_inputs_alg1(const CoefficientSeries& c, double p,
                                       double tol = kDefaultTolerance) {
  const EvalResult f = eval_f(c, p, tol);
  return detail::from_bounds(f.bounds() / Bounds::point(p), f.terms_used);
}

/// Multiplier 1 + 2/(p(1-p)) applied by the non-randomized factory.
inline Bounds nonrand_cost_factor(double p) {
  detail::check_probability(p);
  const Bounds pq = Bounds::point(p) * detail::complement_of(p);
  return Bounds::point(1.0) + Bounds::point(2.0) / pq;
}

/// E[N] = (f(p)/p)(1 + 2/(p(1-p))) for the non-randomized factory.
inline EvalResult expected_inputs_alg2(const CoefficientSeries& c, double p,
                                       double tol = kDefaultTolerance) {
  const EvalResult f = eval_f(c, p, tol);
  return detail::from_bounds(f.bounds() / Bounds::point(p) * nonrand_cost_factor(p),
                             f.terms_used);
}

/// (f')^2 p(1-p) / (f(1-f)) from enclosures of f and f'.
inline EvalResult cramer_rao_from(Bounds f, Bounds f_prime, double p) {
  detail::check_probability(p);
  if (!(f.lo > 0.0 && f.hi < 1.0)) {
    throw DomainError("f(p) enclosure touches 0 or 1; the bound is undefined");
  }
  const Bounds pq = Bounds::point(p) * detail::complement_of(p);
  Bounds fp = f_prime;
  if (fp.lo < 0.0 && fp.hi > 0.0) {
    fp = Bounds{0.0, std::max(-fp.lo, fp.hi)};
  } else if (fp.hi <= 0.0) {
    fp = Bounds{-fp.hi, -fp.lo};
  }
  const Bounds value = fp * fp * pq / (f * (Bounds::point(1.0) - f));
  return detail::from_bounds(value, 0);
}

/// Lower bound on E[N] for any factory whose stopping rule meets the
/// sequential regularity conditions.
inline EvalResult cramer_rao_bound(const CoefficientSeries& c, double p,
                                   double tol = kDefaultTolerance) {
  const EvalResult f = eval_f(c, p, tol);
  const EvalResult fp = eval_f_prime(c, p, tol);
  EvalResult r = cramer_rao_from(f.bounds(), fp.bounds(), p);
  r.terms_used = std::max(f.terms_used, fp.terms_used);
  return r;
}

/// Pr[N = n, Y = 0] = c_n (1-p)^n for the randomized factory.
inline Bounds joint_stop_zero_probability(const CoefficientSeries& c, std::size_t n, double p) {
  detail::check_probability(p);
  const Bounds q = detail::complement_of(p);
  Bounds power = Bounds::point(1.0);
  for (std::size_t i = 0; i < n; ++i) power = power * q;
  return c.coefficient_bounds(n) * power;
}

/// Pr[N > n] = (1 - S_n)(1-p)^n for the randomized factory; at most (1-p)^n.
inline Bounds tail_probability(const CoefficientSeries& c, std::size_t n, double p) {
  detail::check_probability(p);
  const Bounds q = detail::complement_of(p);
  Bounds power = Bounds::point(1.0);
  for (std::size_t i = 0; i < n; ++i) power = power * q;
  const Bounds unassigned = (Bounds::point(1.0) - c.partial_sum_bounds(n)).clamped(0.0, 1.0);
  return unassigned * power;
}

}  // namespace bfactory
