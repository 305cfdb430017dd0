// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Coefficient sequences c_k of target functions written as
//
//     f(p) = 1 - sum_{k>=1} c_k (1-p)^k,   c_k >= 0,   sum_k c_k = 1,
//
// the built-in catalog, coefficient-level combinators, and the conversion
// between coefficients and the per-step stopping probabilities d_k.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bfactory/errors.hpp"
#include "bfactory/lazy_table.hpp"
#include "bfactory/numeric.hpp"

namespace bfactory {

enum class SeriesKind { catalog, finite, combinator, derived };
enum class Exactness { exact_rational, tracked_precision };

/// Fast-path view of one index: certified double enclosures of c_k, of the
/// partial sum S_k, of the tail 1 - S_{k-1}, and of the stopping probability.
struct FastTerm {
  Bounds c;
  Bounds sum;
  Bounds tail;
  Bounds d = Bounds::unit();
  bool hinted = false;
  /// Survival prod_{j<k} (1 - d_j) in extended precision (hinted route).
  long double tail_lo = 1.0L;
  long double tail_hi = 1.0L;
};

/// Lazily evaluated coefficient sequence. Instances are immutable apart from
/// their internal memo tables, which are safe under concurrent reads.
///
/// Two evaluation routes are kept side by side: an exact route returning
/// Interval enclosures (degenerate for exact-rational series, of width
/// O(2^-precision) otherwise), and a fast route of double Bounds used by the
/// samplers and by the analysis code.
class CoefficientSeries {
 public:
  virtual ~CoefficientSeries() = default;
  CoefficientSeries(const CoefficientSeries&) = delete;
  CoefficientSeries& operator=(const CoefficientSeries&) = delete;

  SeriesKind kind() const { return kind_; }
  Exactness exactness() const { return exactness_; }
  bool is_exact() const { return exactness_ == Exactness::exact_rational; }

  /// Canonical expression text, parseable by parse_series() for every node
  /// built from the grammar.
  virtual std::string expression() const = 0;

  /// Last index with a positive coefficient, for finite series.
  virtual std::optional<std::size_t> terminal_index() const { return std::nullopt; }

  /// Exact d_k when a closed form is known; used to skip the generic
  /// division and to build fast tails as products.
  virtual std::optional<Rational> stopping_hint(std::size_t /*k*/) const { return std::nullopt; }

  /// c_k for k >= 1. Exact series ignore `precision`.
  Interval coefficient_at(std::size_t k, unsigned precision = kDefaultPrecision) const {
    check_index(k);
    return exact_term(k, precision).c;
  }

  /// S_K = c_1 + ... + c_K; S_0 = 0.
  Interval partial_sum_at(std::size_t k, unsigned precision = kDefaultPrecision) const {
    if (k == 0) return Interval(0L);
    return exact_term(k, precision).sum;
  }

  /// 1 - S_{k-1}, the mass not yet assigned before index k.
  Interval tail_at(std::size_t k, unsigned precision = kDefaultPrecision) const {
    check_index(k);
    return (Interval(1L) - partial_sum_at(k - 1, precision))
        .rounded(effective_precision(precision));
  }

  const FastTerm& fast_term(std::size_t k) const {
    check_index(k);
    return fast_.get(k - 1, [this](std::size_t i, const LazyTable<FastTerm>& table) {
      return extend_fast(i + 1, i > 0 ? &table.published(i - 1) : nullptr);
    });
  }
  Bounds coefficient_bounds(std::size_t k) const { return fast_term(k).c; }
  Bounds partial_sum_bounds(std::size_t k) const {
    return k == 0 ? Bounds::point(0.0) : fast_term(k).sum;
  }
  Bounds tail_bounds(std::size_t k) const { return fast_term(k).tail; }

  unsigned effective_precision(unsigned precision) const {
    return is_exact() ? 0 : std::max(precision, 64u);
  }

 protected:
  CoefficientSeries(SeriesKind kind, Exactness exactness) : kind_(kind), exactness_(exactness) {}

  /// Called in increasing k for a given precision.
  virtual Interval compute_coefficient(std::size_t k, unsigned precision) const = 0;

  /// Fast enclosure of c_k for series without a stopping hint.
  virtual Bounds compute_coefficient_bounds(std::size_t k) const {
    return Bounds::of(coefficient_at(k));
  }

  static void check_index(std::size_t k) {
    if (k == 0) throw DomainError("series indices start at 1");
  }

 private:
  struct ExactTerm {
    Interval c;
    Interval sum;
  };

  const ExactTerm& exact_term(std::size_t k, unsigned precision) const {
    const unsigned bits = effective_precision(precision);
    const LazyTable<ExactTerm>* table = nullptr;
    {
      std::lock_guard lock(exact_mutex_);
      auto& slot = exact_[bits];
      if (!slot) slot = std::make_unique<LazyTable<ExactTerm>>();
      table = slot.get();
    }
    return table->get(k - 1, [this, bits](std::size_t i, const LazyTable<ExactTerm>& t) {
      const std::size_t index = i + 1;
      ExactTerm term;
      term.c = compute_coefficient(index, bits).rounded(bits);
      if (term.c.hi() < 0 || (is_exact() && term.c.lo() < 0)) {
        throw InconsistentSeries("negative coefficient at index " + std::to_string(index) +
                                 " in " + expression());
      }
      term.c = term.c.clamped(0, term.c.hi());
      const Interval previous = i > 0 ? t.published(i - 1).sum : Interval(0L);
      term.sum = (previous + term.c).rounded(bits);
      if (term.sum.lo() > 1) {
        throw InconsistentSeries("partial sum exceeds one at index " + std::to_string(index) +
                                 " in " + expression());
      }
      if (!is_exact()) term.sum = term.sum.clamped(0, 1);
      return term;
    });
  }

  FastTerm extend_fast(std::size_t k, const FastTerm* prev) const {
    FastTerm term;
    if (prev == nullptr) {
      term.tail = Bounds::point(1.0);
    } else if (prev->hinted) {
      // (1 - d) with d in [d.lo, d.hi]; long double keeps the product from
      // widening by a double ulp per index.
      auto down = [](long double x) { return x > 0.0L ? std::nextafter(x, 0.0L) : 0.0L; };
      auto up = [](long double x) { return std::nextafter(x, HUGE_VALL); };
      const long double keep_lo = 1.0L - static_cast<long double>(prev->d.hi);
      const long double keep_hi = 1.0L - static_cast<long double>(prev->d.lo);
      const bool exact_lo = 1.0L - keep_lo == static_cast<long double>(prev->d.hi);
      const bool exact_hi = 1.0L - keep_hi == static_cast<long double>(prev->d.lo);
      const long double lo = (exact_lo ? keep_lo : down(keep_lo)) * prev->tail_lo;
      const long double hi = (exact_hi ? keep_hi : up(keep_hi)) * prev->tail_hi;
      term.tail_lo = lo == 0.0L || (prev->tail_lo == 1.0L && exact_lo) ? lo : down(lo);
      term.tail_hi = prev->tail_hi == 1.0L && exact_hi ? hi : up(hi);
      term.tail_hi = std::min(term.tail_hi, 1.0L);
      term.tail = Bounds{detail::narrow_down(term.tail_lo), detail::narrow_up(term.tail_hi)}
                      .clamped(0.0, 1.0);
    } else {
      term.tail = (Bounds::point(1.0) - prev->sum).clamped(0.0, 1.0);
    }
    if (prev == nullptr || !prev->hinted) {
      term.tail_lo = term.tail.lo;
      term.tail_hi = term.tail.hi;
    }
    const Bounds prev_sum = prev ? prev->sum : Bounds::point(0.0);
    if (auto hint = stopping_hint(k)) {
      term.hinted = true;
      term.d = Bounds::of(*hint);
      term.c = (term.d * term.tail).clamped(0.0, 1.0);
      const Bounds next_tail = (term.tail * (Bounds::point(1.0) - term.d)).clamped(0.0, 1.0);
      const Bounds by_tail = Bounds::point(1.0) - next_tail;
      const Bounds by_sum = prev_sum + term.c;
      term.sum = Bounds{std::max(by_tail.lo, by_sum.lo), std::min(by_tail.hi, by_sum.hi)}
                     .clamped(0.0, 1.0);
    } else {
      term.c = compute_coefficient_bounds(k).clamped(0.0, 1.0);
      term.sum = (prev_sum + term.c).clamped(0.0, 1.0);
      if (term.tail.lo > 0.0) term.d = (term.c / term.tail).clamped(0.0, 1.0);
    }
    return term;
  }

  SeriesKind kind_;
  Exactness exactness_;
  mutable std::mutex exact_mutex_;
  mutable std::map<unsigned, std::unique_ptr<LazyTable<ExactTerm>>> exact_;
  mutable LazyTable<FastTerm> fast_;
};

using SeriesPtr = std::shared_ptr<const CoefficientSeries>;

// ---------------------------------------------------------------------------
// Catalog

namespace detail {

/// binom(2k-2, k-1) / (2^{2k-1} k): the coefficients of sqrt(p).
inline Rational sqrt_coefficient(std::size_t k) {
  BigInt binom;
  mpz_bin_uiui(binom.get_mpz_t(), 2 * k - 2, k - 1);
  BigInt den = 1;
  den <<= (2 * k - 1);
  den *= static_cast<unsigned long>(k);
  Rational r(binom, den);
  r.canonicalize();
  return r;
}

/// binom(2k, k) / (2^{2k+1} k): coefficients of ln(1 + sqrt p) before the
/// 1/ln 2 normalization.
inline Rational log_sqrt_raw_coefficient(std::size_t k) {
  BigInt binom;
  mpz_bin_uiui(binom.get_mpz_t(), 2 * k, k);
  BigInt den = 1;
  den <<= (2 * k + 1);
  den *= static_cast<unsigned long>(k);
  Rational r(binom, den);
  r.canonicalize();
  return r;
}

class PowerSeries final : public CoefficientSeries {
 public:
  explicit PowerSeries(Rational a)
      : CoefficientSeries(SeriesKind::catalog, Exactness::exact_rational), a_(std::move(a)) {
    if (a_ <= 0 || a_ >= 1) throw DomainError("power: exponent must lie in (0,1), got " + to_string(a_));
  }
  std::string expression() const override { return "power:a=" + to_string(a_); }
  std::optional<Rational> stopping_hint(std::size_t k) const override {
    return Rational(a_ / static_cast<unsigned long>(k));
  }
  const Rational& exponent() const { return a_; }

 protected:
  // (1-a)^{(k-1)} a / k!, with x^{(m)} the rising factorial.
  Interval compute_coefficient(std::size_t k, unsigned) const override {
    Rational rising = 1;
    const Rational base = 1 - a_;
    for (std::size_t m = 0; m + 1 < k; ++m) rising *= base + static_cast<unsigned long>(m);
    BigInt factorial;
    mpz_fac_ui(factorial.get_mpz_t(), k);
    Rational c = rising * a_ / Rational(factorial);
    c.canonicalize();
    return c;
  }

 private:
  Rational a_;
};

class SqrtSeries final : public CoefficientSeries {
 public:
  SqrtSeries() : CoefficientSeries(SeriesKind::catalog, Exactness::exact_rational) {}
  std::string expression() const override { return "sqrt"; }
  std::optional<Rational> stopping_hint(std::size_t k) const override {
    return ratio(1, 2 * k);
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned) const override {
    return sqrt_coefficient(k);
  }
};

/// 2 sqrt(p) / (1 + sqrt(p)); c_k = 2 c'_{k+1} with c' the sqrt coefficients.
class MobiusSqrtSeries final : public CoefficientSeries {
 public:
  MobiusSqrtSeries() : CoefficientSeries(SeriesKind::catalog, Exactness::exact_rational) {}
  std::string expression() const override { return "mobius_sqrt"; }
  std::optional<Rational> stopping_hint(std::size_t k) const override {
    return ratio(1, 2 * k + 2);
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned) const override {
    return Rational(2 * sqrt_coefficient(k + 1));
  }
};

/// p (1 - ln p); c_1 = 0 and c_k = 1 / (k (k-1)) for k >= 2.
class EntropySeries final : public CoefficientSeries {
 public:
  EntropySeries() : CoefficientSeries(SeriesKind::catalog, Exactness::exact_rational) {}
  std::string expression() const override { return "entropy"; }
  std::optional<Rational> stopping_hint(std::size_t k) const override {
    if (k == 1) return Rational(0);
    return ratio(1, k);
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned) const override {
    if (k == 1) return Rational(0);
    return ratio(1, k * (k - 1));
  }
};

/// log2(1 + sqrt p); c_k = binom(2k,k) / (2^{2k+1} k ln 2).
class Log2SqrtSeries final : public CoefficientSeries {
 public:
  Log2SqrtSeries() : CoefficientSeries(SeriesKind::catalog, Exactness::tracked_precision) {}
  std::string expression() const override { return "log2_sqrt"; }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned precision) const override {
    return (Interval(log_sqrt_raw_coefficient(k)) / ln2(precision + 16)).rounded(precision);
  }

  Bounds compute_coefficient_bounds(std::size_t k) const override {
    static const Bounds ln2_bounds = Bounds::of(ln2(128));
    return raw_bounds(k) / ln2_bounds;
  }

 private:
  // q_{k+1} = q_k (2k+1) k / (2 (k+1)^2), q_1 = 1/4.
  Bounds raw_bounds(std::size_t k) const {
    return raw_.get(k - 1, [](std::size_t i, const LazyTable<Bounds>& t) {
      if (i == 0) return Bounds::point(0.25);
      const unsigned long m = i;  // q_{m+1} from q_m
      return t.published(i - 1) * Bounds::of(ratio((2 * m + 1) * m, 2 * (m + 1) * (m + 1)));
    });
  }

  mutable LazyTable<Bounds> raw_;
};

/// (1 - e^{-sqrt p}) / (1 - e^{-1}); c_k = y_{k-1}(1) / ((e-1) 2^k k!) with
/// y_j the Bessel polynomials.
class ExpSqrtSeries final : public CoefficientSeries {
 public:
  ExpSqrtSeries() : CoefficientSeries(SeriesKind::catalog, Exactness::tracked_precision) {}
  std::string expression() const override { return "exp_sqrt"; }

  /// y_j(1) for j >= -1 via y_j = (2j-1) y_{j-1} + y_{j-2}, y_{-1} = y_0 = 1.
  const BigInt& bessel_at_one(long j) const {
    if (j < -1) throw DomainError("Bessel index below -1");
    return bessel_.get(static_cast<std::size_t>(j + 1),
                       [](std::size_t i, const LazyTable<BigInt>& t) -> BigInt {
                         if (i <= 1) return 1;
                         const long jj = static_cast<long>(i) - 1;
                         return BigInt(t.published(i - 1) * (2 * jj - 1) + t.published(i - 2));
                       });
  }

  /// y_{k-1}(1) / (2^k k!), the coefficient before the 1/(e-1) factor.
  Rational raw_coefficient(std::size_t k) const {
    BigInt den;
    mpz_fac_ui(den.get_mpz_t(), k);
    den <<= k;
    Rational r(bessel_at_one(static_cast<long>(k) - 1), den);
    r.canonicalize();
    return r;
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned precision) const override {
    return (Interval(raw_coefficient(k)) / e_minus_one(precision + 16)).rounded(precision);
  }

  Bounds compute_coefficient_bounds(std::size_t k) const override {
    static const Bounds e1_bounds = Bounds::of(e_minus_one(128));
    return raw_bounds(k) / e1_bounds;
  }

 private:
  // g_k = (2k-3)/(2k) g_{k-1} + g_{k-2} / (4k(k-1)), g_0 = 1, g_1 = 1/2.
  Bounds raw_bounds(std::size_t k) const {
    return raw_.get(k, [](std::size_t i, const LazyTable<Bounds>& t) {
      if (i == 0) return Bounds::point(1.0);
      if (i == 1) return Bounds::point(0.5);
      const unsigned long m = i;
      const Rational a = ratio(2 * m - 3, 2 * m);
      const Rational b = ratio(1, 4 * m * (m - 1));
      return t.published(i - 1) * Bounds::of(a) + t.published(i - 2) * Bounds::of(b);
    });
  }

  mutable LazyTable<BigInt> bessel_;
  mutable LazyTable<Bounds> raw_;
};

class FiniteSeries final : public CoefficientSeries {
 public:
  explicit FiniteSeries(std::vector<Rational> coefficients)
      : CoefficientSeries(SeriesKind::finite, Exactness::exact_rational),
        coefficients_(std::move(coefficients)) {
    if (coefficients_.empty()) throw DomainError("finite: coefficient list is empty");
    Rational total = 0;
    for (std::size_t i = 0; i < coefficients_.size(); ++i) {
      if (coefficients_[i] < 0) {
        throw DomainError("finite: coefficient " + std::to_string(i + 1) + " is negative");
      }
      total += coefficients_[i];
      if (coefficients_[i] > 0) terminal_ = i + 1;
    }
    if (total > 1) throw DomainError("finite: coefficients sum to " + to_string(total) + " > 1");
    if (total < 1) {
      throw DomainError("finite: coefficients sum to " + to_string(total) +
                        " < 1; wrap a normalized series in scale(...) instead");
    }
  }

  std::string expression() const override {
    std::string out = "finite:[";
    for (std::size_t i = 0; i < coefficients_.size(); ++i) {
      if (i) out += ',';
      out += to_string(coefficients_[i]);
    }
    return out + "]";
  }
  std::optional<std::size_t> terminal_index() const override { return terminal_; }
  const std::vector<Rational>& coefficients() const { return coefficients_; }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned) const override {
    return k <= coefficients_.size() ? coefficients_[k - 1] : Rational(0);
  }

 private:
  std::vector<Rational> coefficients_;
  std::size_t terminal_ = 0;
};

inline Exactness combined(const SeriesPtr& a, const SeriesPtr& b) {
  return a->is_exact() && b->is_exact() ? Exactness::exact_rational
                                        : Exactness::tracked_precision;
}

/// f2(f1(p)): c_k = sum_j c2_j [x^k] A(x)^j with A(x) = sum_i c1_i x^i.
/// Powers of A are built column by column, so c_k only touches inner
/// coefficients up to degree k and every retained index is exact.
class ComposeSeries final : public CoefficientSeries {
 public:
  ComposeSeries(SeriesPtr inner, SeriesPtr outer, std::size_t order)
      : CoefficientSeries(SeriesKind::combinator, combined(inner, outer)),
        inner_(std::move(inner)),
        outer_(std::move(outer)),
        order_(order) {
    if (order_ == 0) throw DomainError("compose: order must be at least 1");
  }
  std::string expression() const override {
    return "compose(" + inner_->expression() + "," + outer_->expression() +
           ",order=" + std::to_string(order_) + ")";
  }
  std::optional<std::size_t> terminal_index() const override {
    auto a = inner_->terminal_index();
    auto b = outer_->terminal_index();
    if (a && b) return *a * *b;
    return std::nullopt;
  }
  std::size_t order() const { return order_; }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned precision) const override {
    const auto& column = power_column(k, precision);
    Interval c(0L);
    for (std::size_t j = 1; j <= k; ++j) {
      c += outer_->coefficient_at(j, precision) * column[j - 1];
    }
    return c.rounded(precision);
  }

  Bounds compute_coefficient_bounds(std::size_t k) const override {
    const auto& column = fast_columns_.get(k - 1, [this](std::size_t i, const auto& t) {
      return build_column<Bounds>(i + 1, t, [this](std::size_t m) {
        return inner_->coefficient_bounds(m);
      }, [](Bounds x) { return x; });
    });
    Bounds c = Bounds::point(0.0);
    for (std::size_t j = 1; j <= k; ++j) c = c + outer_->coefficient_bounds(j) * column[j - 1];
    return c;
  }

 private:
  /// column[j-1] = [x^k] A^j for j = 1..k.
  template <class T, class Table, class Coefficient, class Round>
  static std::vector<T> build_column(std::size_t k, const Table& table, Coefficient coefficient,
                                     Round round) {
    std::vector<T> column(k);
    std::vector<T> inner(k);
    for (std::size_t m = 1; m <= k; ++m) inner[m - 1] = coefficient(m);
    column[0] = inner[k - 1];
    for (std::size_t j = 2; j <= k; ++j) {
      T sum{};
      for (std::size_t m = 1; m + j - 1 <= k; ++m) {
        sum = sum + inner[m - 1] * table.published(k - m - 1)[j - 2];
      }
      column[j - 1] = round(sum);
    }
    return column;
  }

  const std::vector<Interval>& power_column(std::size_t k, unsigned precision) const {
    const LazyTable<std::vector<Interval>>* table = nullptr;
    {
      std::lock_guard lock(mutex_);
      auto& slot = columns_[precision];
      if (!slot) slot = std::make_unique<LazyTable<std::vector<Interval>>>();
      table = slot.get();
    }
    return table->get(k - 1, [this, precision](std::size_t i, const auto& t) {
      return build_column<Interval>(i + 1, t, [this, precision](std::size_t m) {
        return inner_->coefficient_at(m, precision);
      }, [precision](const Interval& x) { return x.rounded(precision); });
    });
  }

  SeriesPtr inner_;
  SeriesPtr outer_;
  std::size_t order_;
  mutable std::mutex mutex_;
  mutable std::map<unsigned, std::unique_ptr<LazyTable<std::vector<Interval>>>> columns_;
  mutable LazyTable<std::vector<Bounds>> fast_columns_;
};

/// 1 - (1 - f1)(1 - f2): Cauchy convolution of the two sequences.
class ProductComplementSeries final : public CoefficientSeries {
 public:
  ProductComplementSeries(SeriesPtr first, SeriesPtr second)
      : CoefficientSeries(SeriesKind::combinator, combined(first, second)),
        first_(std::move(first)),
        second_(std::move(second)) {}
  std::string expression() const override {
    return "pc(" + first_->expression() + "," + second_->expression() + ")";
  }
  std::optional<std::size_t> terminal_index() const override {
    auto a = first_->terminal_index();
    auto b = second_->terminal_index();
    if (a && b) return *a + *b;
    return std::nullopt;
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned precision) const override {
    Interval c(0L);
    for (std::size_t i = 1; i < k; ++i) {
      c += first_->coefficient_at(i, precision) * second_->coefficient_at(k - i, precision);
    }
    return c.rounded(precision);
  }
  Bounds compute_coefficient_bounds(std::size_t k) const override {
    Bounds c = Bounds::point(0.0);
    for (std::size_t i = 1; i < k; ++i) {
      c = c + first_->coefficient_bounds(i) * second_->coefficient_bounds(k - i);
    }
    return c;
  }

 private:
  SeriesPtr first_;
  SeriesPtr second_;
};

/// alpha f1 + (1 - alpha) f2.
class ConvexSeries final : public CoefficientSeries {
 public:
  ConvexSeries(SeriesPtr first, SeriesPtr second, Rational alpha)
      : CoefficientSeries(SeriesKind::combinator, combined(first, second)),
        first_(std::move(first)),
        second_(std::move(second)),
        alpha_(std::move(alpha)) {
    if (alpha_ <= 0 || alpha_ >= 1) {
      throw DomainError("convex: alpha must lie in (0,1), got " + to_string(alpha_));
    }
  }
  std::string expression() const override {
    return "convex(" + first_->expression() + "," + second_->expression() +
           ",alpha=" + to_string(alpha_) + ")";
  }
  std::optional<std::size_t> terminal_index() const override {
    auto a = first_->terminal_index();
    auto b = second_->terminal_index();
    if (a && b) return std::max(*a, *b);
    return std::nullopt;
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned precision) const override {
    return (Interval(alpha_) * first_->coefficient_at(k, precision) +
            Interval(Rational(1 - alpha_)) * second_->coefficient_at(k, precision))
        .rounded(precision);
  }
  Bounds compute_coefficient_bounds(std::size_t k) const override {
    return Bounds::of(alpha_) * first_->coefficient_bounds(k) +
           Bounds::of(Rational(1 - alpha_)) * second_->coefficient_bounds(k);
  }

 private:
  SeriesPtr first_;
  SeriesPtr second_;
  Rational alpha_;
};

}  // namespace detail

inline SeriesPtr power_series(const Rational& a) { return std::make_shared<detail::PowerSeries>(a); }
inline SeriesPtr sqrt_series() { return std::make_shared<detail::SqrtSeries>(); }
inline SeriesPtr mobius_sqrt_series() { return std::make_shared<detail::MobiusSqrtSeries>(); }
inline SeriesPtr log2_sqrt_series() { return std::make_shared<detail::Log2SqrtSeries>(); }
inline SeriesPtr exp_sqrt_series() { return std::make_shared<detail::ExpSqrtSeries>(); }
inline SeriesPtr entropy_series() { return std::make_shared<detail::EntropySeries>(); }
inline SeriesPtr finite_series(std::vector<Rational> coefficients) {
  return std::make_shared<detail::FiniteSeries>(std::move(coefficients));
}
/// f(p) = p.
inline SeriesPtr identity_series() { return finite_series({Rational(1)}); }

/// Catalog lookup by name. `power` takes the exponent, `finite` the list of
/// coefficients; the other entries take no parameters.
inline SeriesPtr catalog(std::string_view entry, std::span<const Rational> params = {}) {
  auto expect = [&](std::size_t count) {
    if (params.size() != count) {
      throw DomainError(std::string(entry) + ": expected " + std::to_string(count) +
                        " parameter(s), got " + std::to_string(params.size()));
    }
  };
  if (entry == "power") {
    expect(1);
    return power_series(params[0]);
  }
  if (entry == "finite") return finite_series({params.begin(), params.end()});
  expect(0);
  if (entry == "sqrt") return sqrt_series();
  if (entry == "mobius_sqrt") return mobius_sqrt_series();
  if (entry == "log2_sqrt") return log2_sqrt_series();
  if (entry == "exp_sqrt") return exp_sqrt_series();
  if (entry == "entropy") return entropy_series();
  throw DomainError("unknown catalog entry '" + std::string(entry) + "'");
}

/// Names accepted by catalog(), in display order.
inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {"power",    "sqrt",      "mobius_sqrt",
                                                 "log2_sqrt", "exp_sqrt", "entropy", "finite"};
  return names;
}

inline SeriesPtr compose(SeriesPtr inner, SeriesPtr outer, std::size_t order) {
  return std::make_shared<detail::ComposeSeries>(std::move(inner), std::move(outer), order);
}
inline SeriesPtr product_complement(SeriesPtr first, SeriesPtr second) {
  return std::make_shared<detail::ProductComplementSeries>(std::move(first), std::move(second));
}
inline SeriesPtr convex_combination(SeriesPtr first, SeriesPtr second, const Rational& alpha) {
  return std::make_shared<detail::ConvexSeries>(std::move(first), std::move(second), alpha);
}

// ---------------------------------------------------------------------------
// Stopping sequences

/// Fast-path view of d_k as certified doubles and as 64-bit fixed point:
/// floor(lo 2^64) <= d 2^64 <= ceil(hi 2^64).
struct FastStop {
  Bounds d = Bounds::unit();
  std::uint64_t lo_fixed = 0;
  std::uint64_t hi_fixed = std::numeric_limits<std::uint64_t>::max();
  bool exact = false;
  bool is_zero = false;
  bool is_one = false;
  /// m when d = a / 2^m exactly in lowest terms (m = 0 for d in {0, 1}).
  long dyadic_exponent = -1;

  /// hi_fixed is a usable upper bound; max() means "at least 2^64 - 1".
  bool hi_bounded() const { return hi_fixed != std::numeric_limits<std::uint64_t>::max(); }

  static FastStop from_exact(const Rational& value) {
    FastStop s;
    s.d = Bounds::of(value);
    s.exact = true;
    s.is_zero = value == 0;
    s.is_one = value == 1;
    s.dyadic_exponent = ::bfactory::dyadic_exponent(value);
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    const BigInt lo = floor_scaled(value, 64);
    const BigInt hi = ceil_scaled(value, 64);
    s.lo_fixed = lo >= BigInt(kMax) ? kMax : static_cast<std::uint64_t>(lo.get_ui());
    s.hi_fixed = hi >= BigInt(kMax) ? kMax : static_cast<std::uint64_t>(hi.get_ui());
    return s;
  }

  static FastStop from_bounds(const Bounds& bounds) {
    FastStop s;
    s.d = bounds.clamped(0.0, 1.0);
    s.lo_fixed = floor_fixed64(s.d.lo);
    s.hi_fixed = ceil_fixed64(s.d.hi);
    return s;
  }
};

/// d_k = c_k / (1 - sum_{j<k} c_j), the conditional probability of stopping
/// at step k given that no earlier step stopped. Built either from a
/// coefficient series or from an explicit rule k -> d_k.
class StoppingSequence {
 public:
  using Rule = std::function<Rational(std::size_t)>;

  explicit StoppingSequence(SeriesPtr source)
      : source_(std::move(source)), terminal_(source_->terminal_index()) {}

  StoppingSequence(Rule rule, std::optional<std::size_t> terminal, std::string label)
      : rule_(std::move(rule)), terminal_(terminal), label_(std::move(label)) {
    if (terminal_ && *terminal_ == 0) throw DomainError("terminal index must be positive");
  }

  StoppingSequence(const StoppingSequence&) = delete;
  StoppingSequence& operator=(const StoppingSequence&) = delete;

  std::optional<std::size_t> terminal_index() const { return terminal_; }
  bool is_exact() const { return !source_ || source_->is_exact(); }
  const SeriesPtr& source() const { return source_; }
  std::string label() const { return source_ ? source_->expression() : label_; }

  /// Enclosure of d_k (exact on the rational path).
  Interval d_at(std::size_t k, unsigned precision = kDefaultPrecision) const {
    check(k);
    if (rule_) return checked_rule(k);
    if (auto hint = source_->stopping_hint(k)) return *hint;
    const unsigned bits = source_->effective_precision(precision);
    const Interval c = source_->coefficient_at(k, bits);
    const Interval tail = source_->tail_at(k, bits);
    if (source_->is_exact()) {
      if (tail.lo() == 0) {
        if (c.lo() > 0) {
          throw InconsistentSeries("positive coefficient after the partial sums reached one "
                                   "at index " + std::to_string(k));
        }
        throw UndefinedIndex("d_" + std::to_string(k) + " is undefined: series already complete");
      }
      return c / tail;
    }
    if (tail.lo() <= 0) {
      throw InsufficientPrecision("tail enclosure at index " + std::to_string(k) +
                                  " straddles zero at " + std::to_string(bits) + " bits");
    }
    return (c / tail).rounded(bits).clamped(0, 1);
  }

  const FastStop& fast_at(std::size_t k) const {
    check(k);
    return fast_.get(k - 1, [this](std::size_t i, const LazyTable<FastStop>&) {
      return compute_fast(i + 1);
    });
  }

 private:
  void check(std::size_t k) const {
    if (k == 0) throw DomainError("stopping indices start at 1");
    if (terminal_ && k > *terminal_) {
      throw UndefinedIndex("d_" + std::to_string(k) + " is undefined past terminal index " +
                           std::to_string(*terminal_));
    }
  }

  Rational checked_rule(std::size_t k) const {
    Rational d = rule_(k);
    if (d < 0 || d > 1) throw DomainError("stopping probability outside [0,1] at index " + std::to_string(k));
    if (terminal_ && k == *terminal_ && d != 1) {
      throw InconsistentSeries("d at the terminal index must equal 1");
    }
    return d;
  }

  FastStop compute_fast(std::size_t k) const {
    if (rule_) return FastStop::from_exact(checked_rule(k));
    if (auto hint = source_->stopping_hint(k)) return FastStop::from_exact(*hint);
    if (source_->is_exact() && terminal_) return FastStop::from_exact(d_at(k).lo());
    return FastStop::from_bounds(source_->fast_term(k).d);
  }

  SeriesPtr source_;
  Rule rule_;
  std::optional<std::size_t> terminal_;
  std::string label_;
  mutable LazyTable<FastStop> fast_;
};

using StoppingPtr = std::shared_ptr<const StoppingSequence>;

inline StoppingPtr stopping_from_coefficients(SeriesPtr c) {
  return std::make_shared<StoppingSequence>(std::move(c));
}

/// Stopping sequence given by an explicit rule, e.g. d_k = 1/2 for all k.
inline StoppingPtr stopping_from_rule(StoppingSequence::Rule rule,
                                      std::optional<std::size_t> terminal, std::string label) {
  return std::make_shared<StoppingSequence>(std::move(rule), terminal, std::move(label));
}

namespace detail {

/// c_k = d_k prod_{j<k} (1 - d_j).
class StoppingDerivedSeries final : public CoefficientSeries {
 public:
  explicit StoppingDerivedSeries(StoppingPtr stopping)
      : CoefficientSeries(SeriesKind::derived, stopping->is_exact()
                                                   ? Exactness::exact_rational
                                                   : Exactness::tracked_precision),
        stopping_(std::move(stopping)) {}

  std::string expression() const override { return "from_stopping(" + stopping_->label() + ")"; }
  std::optional<std::size_t> terminal_index() const override { return stopping_->terminal_index(); }
  std::optional<Rational> stopping_hint(std::size_t k) const override {
    if (!stopping_->is_exact() || past_terminal(k)) return std::nullopt;
    return stopping_->d_at(k).lo();
  }

 protected:
  Interval compute_coefficient(std::size_t k, unsigned precision) const override {
    if (past_terminal(k)) return Rational(0);
    return (stopping_->d_at(k, precision) * survival(k, precision)).rounded(precision);
  }

 private:
  bool past_terminal(std::size_t k) const {
    auto t = stopping_->terminal_index();
    return t && k > *t;
  }

  /// prod_{j<k} (1 - d_j)
  Interval survival(std::size_t k, unsigned precision) const {
    const LazyTable<Interval>* table = nullptr;
    {
      std::lock_guard lock(mutex_);
      auto& slot = survival_[precision];
      if (!slot) slot = std::make_unique<LazyTable<Interval>>();
      table = slot.get();
    }
    return table->get(k - 1, [this, precision](std::size_t i, const LazyTable<Interval>& t) {
      if (i == 0) return Interval(1L);
      const Interval d = stopping_->d_at(i, precision);
      return (t.published(i - 1) * (Interval(1L) - d)).rounded(precision).clamped(0, 1);
    });
  }

  StoppingPtr stopping_;
  mutable std::mutex mutex_;
  mutable std::map<unsigned, std::unique_ptr<LazyTable<Interval>>> survival_;
};

}  // namespace detail

inline SeriesPtr coefficients_from_stopping(StoppingPtr d) {
  return std::make_shared<detail::StoppingDerivedSeries>(std::move(d));
}

}  // namespace bfactory
