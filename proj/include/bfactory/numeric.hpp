// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Numeric building blocks: exact rationals, rational interval enclosures
// with dyadic outward rounding, and certified double-precision bounds for
// the hot sampling path.

#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <string_view>

#include "bfactory/errors.hpp"

namespace bfactory {

using BigInt = mpz_class;
using Rational = mpq_class;

/// Fractional bits used by tracked-precision series unless told otherwise.
inline constexpr unsigned kDefaultPrecision = 256;
/// Largest precision the escalation loops are allowed to reach.
inline constexpr unsigned kDefaultDigitCeiling = 4096;

// ---------------------------------------------------------------------------
// Rational helpers

/// floor(x * 2^bits)
inline BigInt floor_scaled(const Rational& x, unsigned bits) {
  BigInt num = x.get_num();
  num <<= bits;
  BigInt q;
  mpz_fdiv_q(q.get_mpz_t(), num.get_mpz_t(), x.get_den_mpz_t());
  return q;
}

/// ceil(x * 2^bits)
inline BigInt ceil_scaled(const Rational& x, unsigned bits) {
  BigInt num = x.get_num();
  num <<= bits;
  BigInt q;
  mpz_cdiv_q(q.get_mpz_t(), num.get_mpz_t(), x.get_den_mpz_t());
  return q;
}

/// m / 2^bits
inline Rational from_scaled(const BigInt& m, unsigned bits) {
  BigInt den = 1;
  den <<= bits;
  Rational r(m, den);
  r.canonicalize();
  return r;
}

/// Exponent m when x = a / 2^m in lowest terms, otherwise -1.
inline long dyadic_exponent(const Rational& x) {
  const BigInt& den = x.get_den();
  if (mpz_popcount(den.get_mpz_t()) != 1) return -1;
  return static_cast<long>(mpz_scan1(den.get_mpz_t(), 0));
}

inline std::string to_string(const Rational& x) { return x.get_str(); }

/// num / den in lowest terms.
inline Rational ratio(unsigned long num, unsigned long den) {
  Rational r(num, den);
  r.canonicalize();
  return r;
}

/// Parses "n", "n/d", or a decimal literal with optional exponent into an
/// exact rational. Decimal literals are read exactly: "0.3" is 3/10.
inline Rational parse_rational(std::string_view text) {
  auto fail = [&] {
    return DomainError("malformed number '" + std::string(text) + "'");
  };
  if (text.empty()) throw fail();
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Rational num = parse_rational(text.substr(0, slash));
    Rational den = parse_rational(text.substr(slash + 1));
    if (num.get_den() != 1 || den.get_den() != 1) throw fail();
    if (den == 0) throw DomainError("zero denominator in '" + std::string(text) + "'");
    Rational r = num / den;
    r.canonicalize();
    return r;
  }
  std::size_t i = 0;
  bool negative = false;
  if (text[i] == '+' || text[i] == '-') negative = text[i++] == '-';
  std::string digits;
  long scale = 0;
  bool seen_digit = false;
  for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
    digits.push_back(text[i]);
    seen_digit = true;
  }
  if (i < text.size() && text[i] == '.') {
    ++i;
    for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
      digits.push_back(text[i]);
      --scale;
      seen_digit = true;
    }
  }
  if (!seen_digit) throw fail();
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    bool exp_negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) exp_negative = text[i++] == '-';
    long exponent = 0;
    bool exp_digit = false;
    for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
      exponent = exponent * 10 + (text[i] - '0');
      if (exponent > 100000) throw fail();
      exp_digit = true;
    }
    if (!exp_digit) throw fail();
    scale += exp_negative ? -exponent : exponent;
  }
  if (i != text.size()) throw fail();
  BigInt mantissa(digits, 10);
  BigInt ten_power;
  mpz_ui_pow_ui(ten_power.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(scale)));
  Rational r = scale >= 0 ? Rational(mantissa * ten_power) : Rational(mantissa, ten_power);
  r.canonicalize();
  return negative ? Rational(-r) : r;
}

/// Largest double not above x.
inline double to_double_down(const Rational& x) {
  double d = x.get_d();  // truncates toward zero
  if (Rational(d) > x) d = std::nextafter(d, -std::numeric_limits<double>::infinity());
  return d;
}

/// Smallest double not below x.
inline double to_double_up(const Rational& x) {
  double d = x.get_d();
  if (Rational(d) < x) d = std::nextafter(d, std::numeric_limits<double>::infinity());
  return d;
}
/// Nearest double to x, ties to even.
inline double to_double_nearest(const Rational& x) {
  const double lo = to_double_down(x);
  const double hi = to_double_up(x);
  if (lo == hi) return lo;
  const Rational below = x - Rational(lo);
  const Rational above = Rational(hi) - x;
  if (below != above) return below < above ? lo : hi;
  std::int64_t bits = 0;
  std::memcpy(&bits, &lo, sizeof bits);
  return (bits & 1) == 0 ? lo : hi;
}

// ---------------------------------------------------------------------------
// Interval

/// Closed interval [lo, hi] with rational endpoints. A degenerate interval
/// is an exact value. Tracked-precision computations call rounded() after
/// every step to keep endpoints on the dyadic grid of 2^-bits.
class Interval {
 public:
  Interval() = default;
  Interval(const Rational& value) : lo_(value), hi_(value) {}  // NOLINT
  Interval(long value) : lo_(value), hi_(value) {}             // NOLINT
  Interval(const Rational& lo, const Rational& hi) : lo_(lo), hi_(hi) {
    if (lo_ > hi_) throw Error("interval with lo > hi");
  }

  const Rational& lo() const { return lo_; }
  const Rational& hi() const { return hi_; }
  bool is_exact() const { return lo_ == hi_; }
  Rational width() const { return hi_ - lo_; }
  Rational radius() const { return Rational(hi_ - lo_) / 2; }
  Rational midpoint() const { return Rational(lo_ + hi_) / 2; }
  bool contains(const Rational& x) const { return lo_ <= x && x <= hi_; }
  bool contains(const Interval& other) const {
    return lo_ <= other.lo_ && other.hi_ <= hi_;
  }
  bool overlaps(const Interval& other) const {
    return lo_ <= other.hi_ && other.lo_ <= hi_;
  }

  /// Outward rounding onto the grid 2^-bits; bits == 0 leaves it unchanged.
  Interval rounded(unsigned bits) const {
    if (bits == 0) return *this;
    Interval r;
    r.lo_ = from_scaled(floor_scaled(lo_, bits), bits);
    r.hi_ = is_exact() && r.lo_ == lo_ ? r.lo_ : from_scaled(ceil_scaled(hi_, bits), bits);
    return r;
  }

  Interval clamped(const Rational& floor, const Rational& ceiling) const {
    Interval r = *this;
    if (r.lo_ < floor) r.lo_ = floor;
    if (r.hi_ > ceiling) r.hi_ = ceiling;
    if (r.lo_ > r.hi_) r.lo_ = r.hi_;
    return r;
  }

  friend Interval operator+(const Interval& a, const Interval& b) {
    if (a.is_exact() && b.is_exact()) return Interval(Rational(a.lo_ + b.lo_));
    return Interval(a.lo_ + b.lo_, a.hi_ + b.hi_);
  }
  friend Interval operator-(const Interval& a, const Interval& b) {
    if (a.is_exact() && b.is_exact()) return Interval(Rational(a.lo_ - b.lo_));
    return Interval(a.lo_ - b.hi_, a.hi_ - b.lo_);
  }
  friend Interval operator*(const Interval& a, const Interval& b) {
    if (a.is_exact() && b.is_exact()) return Interval(Rational(a.lo_ * b.lo_));
    if (a.lo_ >= 0 && b.lo_ >= 0) return Interval(a.lo_ * b.lo_, a.hi_ * b.hi_);
    Rational p[4] = {a.lo_ * b.lo_, a.lo_ * b.hi_, a.hi_ * b.lo_, a.hi_ * b.hi_};
    return Interval(*std::min_element(p, p + 4), *std::max_element(p, p + 4));
  }
  friend Interval operator/(const Interval& a, const Interval& b) {
    if (b.lo_ <= 0 && b.hi_ >= 0) {
      throw InsufficientPrecision("interval division by an enclosure of zero");
    }
    if (a.is_exact() && b.is_exact()) return Interval(Rational(a.lo_ / b.lo_));
    if (a.lo_ >= 0 && b.lo_ > 0) return Interval(a.lo_ / b.hi_, a.hi_ / b.lo_);
    Rational q[4] = {a.lo_ / b.lo_, a.lo_ / b.hi_, a.hi_ / b.lo_, a.hi_ / b.hi_};
    return Interval(*std::min_element(q, q + 4), *std::max_element(q, q + 4));
  }
  Interval& operator+=(const Interval& b) { return *this = *this + b; }
  Interval& operator*=(const Interval& b) { return *this = *this * b; }

  friend bool operator==(const Interval& a, const Interval& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  Rational lo_;
  Rational hi_;
};

// ---------------------------------------------------------------------------
// Certified double bounds

inline double next_down(double x) {
  return std::nextafter(x, -std::numeric_limits<double>::infinity());
}
inline double next_up(double x) {
  return std::nextafter(x, std::numeric_limits<double>::infinity());
}

namespace detail {

// Directed rounding of one double operation from its exact error term
// (TwoSum for sums, fma remainders for products and quotients). Exact
// results, including zero, are returned unchanged.
inline double sum_down(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) return std::isnan(s) ? s : next_down(s);
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return err < 0 ? next_down(s) : s;
}
inline double sum_up(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) return std::isnan(s) ? s : next_up(s);
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return err > 0 ? next_up(s) : s;
}
inline double product_down(double a, double b) {
  const double r = a * b;
  if (!std::isfinite(r)) return r;
  if (r != 0 && std::abs(r) < 0x1p-960) return next_down(r);  // fma error may underflow
  const double err = std::fma(a, b, -r);
  return err < 0 || (r == 0 && a != 0 && b != 0 && (a < 0) != (b < 0)) ? next_down(r) : r;
}
inline double product_up(double a, double b) {
  const double r = a * b;
  if (!std::isfinite(r)) return r;
  if (r != 0 && std::abs(r) < 0x1p-960) return next_up(r);
  const double err = std::fma(a, b, -r);
  return err > 0 || (r == 0 && a != 0 && b != 0 && (a < 0) == (b < 0)) ? next_up(r) : r;
}
// sign(a/b - r) = sign(rem) * sign(b) with rem = a - r b exactly.
inline double quotient_down(double a, double b) {
  const double r = a / b;
  if (!std::isfinite(r) || !std::isfinite(a)) return r;
  if (r != 0 && std::abs(r) < 0x1p-960) return next_down(r);
  const double rem = std::fma(-r, b, a);
  const bool below = (rem > 0 && b < 0) || (rem < 0 && b > 0);
  return below || (r == 0 && a != 0 && (a < 0) != (b < 0)) ? next_down(r) : r;
}
inline double quotient_up(double a, double b) {
  const double r = a / b;
  if (!std::isfinite(r) || !std::isfinite(a)) return r;
  if (r != 0 && std::abs(r) < 0x1p-960) return next_up(r);
  const double rem = std::fma(-r, b, a);
  const bool above = (rem > 0 && b > 0) || (rem < 0 && b < 0);
  return above || (r == 0 && a != 0 && (a < 0) == (b < 0)) ? next_up(r) : r;
}

/// x as a double enclosure [down(x), up(x)].
inline double narrow_down(long double x) {
  const double d = static_cast<double>(x);
  return static_cast<long double>(d) > x ? next_down(d) : d;
}
inline double narrow_up(long double x) {
  const double d = static_cast<double>(x);
  return static_cast<long double>(d) < x ? next_up(d) : d;
}

}  // namespace detail

/// Enclosure [lo, hi] in doubles. Each arithmetic result is rounded outward
/// from its exact error term, so exact operations stay exact.
struct Bounds {
  double lo = 0.0;
  double hi = 0.0;

  static Bounds point(double x) { return {x, x}; }
  static Bounds of(const Rational& x) { return {to_double_down(x), to_double_up(x)}; }
  static Bounds of(const Interval& x) { return {to_double_down(x.lo()), to_double_up(x.hi())}; }
  static Bounds unit() { return {0.0, 1.0}; }

  double mid() const { return 0.5 * (lo + hi); }
  double radius() const { return 0.5 * (hi - lo); }
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool contains(const Rational& x) const { return Rational(lo) <= x && x <= Rational(hi); }

  Bounds clamped(double floor, double ceiling) const {
    Bounds r{std::max(lo, floor), std::min(hi, ceiling)};
    if (r.lo > r.hi) r.lo = r.hi;
    return r;
  }

  friend Bounds operator+(Bounds a, Bounds b) {
    return {detail::sum_down(a.lo, b.lo), detail::sum_up(a.hi, b.hi)};
  }
  friend Bounds operator-(Bounds a, Bounds b) {
    return {detail::sum_down(a.lo, -b.hi), detail::sum_up(a.hi, -b.lo)};
  }
  friend Bounds operator*(Bounds a, Bounds b) {
    if (a.lo >= 0 && b.lo >= 0) {
      return {detail::product_down(a.lo, b.lo), detail::product_up(a.hi, b.hi)};
    }
    const double x[2] = {a.lo, a.hi};
    const double y[2] = {b.lo, b.hi};
    Bounds r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (double u : x) {
      for (double v : y) {
        r.lo = std::min(r.lo, detail::product_down(u, v));
        r.hi = std::max(r.hi, detail::product_up(u, v));
      }
    }
    return r;
  }
  /// Division by an enclosure that may contain zero yields the whole line.
  friend Bounds operator/(Bounds a, Bounds b) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (b.lo <= 0 && b.hi >= 0) return {-inf, inf};
    if (a.lo >= 0 && b.lo > 0) {
      return {detail::quotient_down(a.lo, b.hi), detail::quotient_up(a.hi, b.lo)};
    }
    const double x[2] = {a.lo, a.hi};
    const double y[2] = {b.lo, b.hi};
    Bounds r{inf, -inf};
    for (double u : x) {
      for (double v : y) {
        r.lo = std::min(r.lo, detail::quotient_down(u, v));
        r.hi = std::max(r.hi, detail::quotient_up(u, v));
      }
    }
    return r;
  }
};

// ---------------------------------------------------------------------------
// 64-bit fixed point views of probabilities

/// floor(x * 2^64), saturating at 2^64 - 1.
inline std::uint64_t floor_fixed64(double x) {
  if (!(x > 0.0)) return 0;
  if (x >= 1.0) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::ldexp(x, 64));
}

/// ceil(x * 2^64); nullopt-like sentinel max() when the ceiling is >= 2^64 - 1.
inline std::uint64_t ceil_fixed64(double x) {
  if (!(x > 0.0)) return 0;
  if (x >= 1.0) return std::numeric_limits<std::uint64_t>::max();
  double scaled = std::ceil(std::ldexp(x, 64));
  if (scaled >= 18446744073709551615.0) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(scaled);
}

// ---------------------------------------------------------------------------
// Constants

namespace detail {

inline Interval compute_ln2(unsigned bits) {
  // ln 2 = sum_{k>=1} 1 / (k 2^k); the tail after W terms is below 2^-W.
  const unsigned w = bits + 32;
  BigInt lo = 0, hi = 0;
  for (unsigned k = 1; k <= w; ++k) {
    BigInt scaled = 1;
    scaled <<= (w - k);
    BigInt q, r;
    mpz_fdiv_qr_ui(q.get_mpz_t(), r.get_mpz_t(), scaled.get_mpz_t(), k);
    lo += q;
    hi += q + (r != 0 ? 1 : 0);
  }
  hi += 1;
  return Interval(from_scaled(lo, w), from_scaled(hi, w)).rounded(bits);
}

inline Interval compute_e_minus_one(unsigned bits) {
  // e - 1 = sum_{k>=1} 1/k!
  const unsigned w = bits + 32;
  BigInt term_lo = 1, term_hi = 1;
  term_lo <<= w;
  term_hi <<= w;
  BigInt lo = 0, hi = 0;
  for (unsigned long k = 1;; ++k) {
    mpz_fdiv_q_ui(term_lo.get_mpz_t(), term_lo.get_mpz_t(), k);
    mpz_cdiv_q_ui(term_hi.get_mpz_t(), term_hi.get_mpz_t(), k);
    lo += term_lo;
    hi += term_hi;
    if (term_hi <= 1) break;
  }
  hi += 1;  // remaining tail is at most term_hi / k <= 1 unit
  return Interval(from_scaled(lo, w), from_scaled(hi, w)).rounded(bits);
}

template <class Compute>
const Interval& cached_constant(std::map<unsigned, Interval>& cache, std::mutex& mutex,
                                unsigned bits, Compute compute) {
  std::lock_guard lock(mutex);
  auto it = cache.find(bits);
  if (it == cache.end()) it = cache.emplace(bits, compute(bits)).first;
  return it->second;
}

}  // namespace detail

/// Enclosure of ln 2 with endpoints on the 2^-bits grid.
inline Interval ln2(unsigned bits) {
  static std::map<unsigned, Interval> cache;
  static std::mutex mutex;
  return detail::cached_constant(cache, mutex, bits, detail::compute_ln2);
}

/// Enclosure of e - 1 with endpoints on the 2^-bits grid.
inline Interval e_minus_one(unsigned bits) {
  static std::map<unsigned, Interval> cache;
  static std::mutex mutex;
  return detail::cached_constant(cache, mutex, bits, detail::compute_e_minus_one);
}

}  // namespace bfactory
