// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Non-randomized factory: V_i ~ Bernoulli(d_i) is produced from the coin
// itself by picking a binary digit of d_i at a Geometric(1/2) position, the
// position being driven by von Neumann fair bits.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "bfactory/errors.hpp"
#include "bfactory/factory.hpp"
#include "bfactory/numeric.hpp"
#include "bfactory/series.hpp"
#include "bfactory/sources.hpp"

namespace bfactory {

/// How dyadic values are expanded; 0 and 1 are always 0.000... and 0.111...
enum class DyadicConvention { terminate_with_zeros, terminate_with_ones };

/// Digits at positions >= from_position all equal `digit`.
struct ConstantTail {
  std::size_t from_position = 1;
  bool digit = false;
};

/// Digit j >= 1 of the fractional binary expansion of any value inside `d`,
/// or nullopt when the enclosure does not pin it down.
inline std::optional<bool> binary_digit(const Interval& d, std::size_t j,
                                        DyadicConvention convention) {
  if (d.lo() >= 1) return true;
  if (d.hi() <= 0) return false;
  const auto bits = static_cast<unsigned>(j);
  if (convention == DyadicConvention::terminate_with_zeros) {
    const BigInt a = floor_scaled(d.lo(), bits);
    if (a != floor_scaled(d.hi(), bits)) return std::nullopt;
    return mpz_odd_p(a.get_mpz_t()) != 0;
  }
  const BigInt a = ceil_scaled(d.lo(), bits);
  if (a != ceil_scaled(d.hi(), bits)) return std::nullopt;
  return mpz_even_p(a.get_mpz_t()) != 0;  // (a - 1) odd
}

/// Constant digit run of an exact value under a convention, if any.
inline std::optional<ConstantTail> constant_tail_of(const Rational& d,
                                                    DyadicConvention convention) {
  if (d == 0) return ConstantTail{1, false};
  if (d == 1) return ConstantTail{1, true};
  const long m = dyadic_exponent(d);
  if (m < 0) return std::nullopt;
  return ConstantTail{static_cast<std::size_t>(m) + 1,
                      convention == DyadicConvention::terminate_with_ones};
}

/// Binary digits of the stopping probabilities d_k.
class DigitOracle {
 public:
  explicit DigitOracle(StoppingPtr d,
                       DyadicConvention convention = DyadicConvention::terminate_with_zeros,
                       unsigned precision_ceiling = kDefaultDigitCeiling)
      : d_(std::move(d)), convention_(convention), ceiling_(precision_ceiling) {}

  const StoppingSequence& stopping() const { return *d_; }
  const StoppingPtr& stopping_ptr() const { return d_; }
  DyadicConvention convention() const { return convention_; }
  unsigned precision_ceiling() const { return ceiling_; }

  bool digit_at(std::size_t k, std::size_t j) const {
    if (j == 0) throw DomainError("digit positions start at 1");
    const FastStop& fast = d_->fast_at(k);
    if (fast.is_one) return true;
    if (fast.is_zero) return false;
    const bool dyadic_ones =
        fast.exact && fast.dyadic_exponent >= 0 && convention_ == DyadicConvention::terminate_with_ones;
    if (j <= 64 && fast.hi_bounded() && !dyadic_ones) {
      const unsigned shift = 64 - static_cast<unsigned>(j);
      const std::uint64_t a = j == 64 ? fast.lo_fixed : fast.lo_fixed >> shift;
      const std::uint64_t b = j == 64 ? fast.hi_fixed : fast.hi_fixed >> shift;
      if (a == b) return (a & 1U) != 0;
    }
    unsigned precision = kDefaultPrecision;
    while (precision < j + 64) precision *= 2;
    for (;;) {
      if (precision > ceiling_ && !d_->is_exact()) {
        throw InsufficientPrecision("digit " + std::to_string(j) + " of d_" + std::to_string(k) +
                                    " unresolved within " + std::to_string(ceiling_) + " bits");
      }
      const Interval value = d_->d_at(k, precision);
      if (auto digit = binary_digit(value, j, convention_)) return *digit;
      if (value.is_exact()) throw Error("exact value without a decidable digit");
      precision *= 2;
    }
  }

  std::optional<ConstantTail> constant_tail(std::size_t k) const {
    const FastStop& fast = d_->fast_at(k);
    if (!fast.exact) return std::nullopt;
    if (fast.is_zero) return ConstantTail{1, false};
    if (fast.is_one) return ConstantTail{1, true};
    if (fast.dyadic_exponent < 0) return std::nullopt;
    return constant_tail_of(d_->d_at(k).lo(), convention_);
  }

 private:
  StoppingPtr d_;
  DyadicConvention convention_;
  unsigned ceiling_;
};

inline DigitOracle digit_oracle_from(StoppingPtr d,
                                     DyadicConvention convention = DyadicConvention::terminate_with_zeros,
                                     unsigned precision_ceiling = kDefaultDigitCeiling) {
  return DigitOracle(std::move(d), convention, precision_ceiling);
}

struct VonNeumannResult {
  bool bit = false;
  std::uint64_t pairs_used = 0;
};

/// Reads pairs until they differ and returns the first bit of that pair.
inline VonNeumannResult von_neumann_bit(CoinSource& coins) {
  VonNeumannResult r;
  for (;;) {
    const bool first = coins.flip();
    const bool second = coins.flip();
    ++r.pairs_used;
    if (first != second) {
      r.bit = first;
      return r;
    }
  }
}

/// Bernoulli(d) from fair bits: walk positions j = 1, 2, ... while the fair
/// bit is 0 and return digit j at the first 1. With `shortcut`, positions in
/// the known constant tail return the repeating digit without reading coins.
template <class DigitAt>
bool bernoulli_from_digits(DigitAt&& digit_at, const std::optional<ConstantTail>& tail,
                           bool shortcut, CoinSource& coins, std::uint64_t& pairs) {
  for (std::size_t j = 1;; ++j) {
    if (shortcut && tail && j >= tail->from_position) return tail->digit;
    const VonNeumannResult fair = von_neumann_bit(coins);
    pairs += fair.pairs_used;
    if (fair.bit) return digit_at(j);
  }
}

struct NonRandOutcome {
  bool y = false;
  std::uint64_t n_total = 0;
  std::uint64_t n_outer = 0;
  std::uint64_t pairs = 0;
  std::optional<std::vector<std::uint64_t>> pair_counts;
};

struct NonRandOptions {
  bool dyadic_shortcut = false;
  bool record_pairs = false;
};

/// Same outer loop as the randomized factory, with V_i generated every
/// iteration from the coin. No uniform source is involved.
inline NonRandOutcome sample_algorithm2(const StoppingSequence& d, const DigitOracle& oracle,
                                        CoinSource& coins, const NonRandOptions& options = {}) {
  if (&oracle.stopping() != &d) throw DomainError("digit oracle built for a different sequence");
  NonRandOutcome out;
  if (options.record_pairs) out.pair_counts.emplace();
  const std::uint64_t before = coins.draws();
  for (std::size_t i = 1;; ++i) {
    const bool x = coins.flip();
    std::uint64_t pairs = 0;
    const bool v = bernoulli_from_digits([&](std::size_t j) { return oracle.digit_at(i, j); },
                                         options.dyadic_shortcut ? oracle.constant_tail(i)
                                                                 : std::nullopt,
                                         options.dyadic_shortcut, coins, pairs);
    out.pairs += pairs;
    if (out.pair_counts) out.pair_counts->push_back(pairs);
    if (x || v) {
      out.y = x;
      out.n_outer = i;
      out.n_total = coins.draws() - before;
      return out;
    }
  }
}

/// Bernoulli(alpha) from the coin alone, for alpha-scaling in
/// non-randomized mode.
class DigitConstantCoin final : public ConstantCoin {
 public:
  DigitConstantCoin(Rational alpha, bool shortcut)
      : ConstantCoin(std::move(alpha)),
        tail_(constant_tail_of(this->alpha(), DyadicConvention::terminate_with_zeros)),
        shortcut_(shortcut) {}
  bool draw(CoinSource& coins, UniformSource&, FactoryOutcome& out) const override {
    if (alpha() == 1) return true;
    return bernoulli_from_digits(
        [this](std::size_t j) {
          return *binary_digit(Interval(alpha()), j, DyadicConvention::terminate_with_zeros);
        },
        tail_, shortcut_, coins, out.pairs);
  }

 private:
  std::optional<ConstantTail> tail_;
  bool shortcut_;
};

namespace detail {

class NonRandomizedFactory final : public Factory {
 public:
  NonRandomizedFactory(DigitOracle oracle, NonRandOptions options)
      : oracle_(std::move(oracle)), options_(options) {}
  FactoryOutcome sample(CoinSource& coins, UniformSource&) const override {
    const NonRandOutcome r = sample_algorithm2(oracle_.stopping(), oracle_, coins, options_);
    FactoryOutcome out;
    out.y = r.y;
    out.n = r.n_total;
    out.outer = r.n_outer;
    out.pairs = r.pairs;
    return out;
  }
  std::string expression() const override { return oracle_.stopping().label(); }

 private:
  DigitOracle oracle_;
  NonRandOptions options_;
};

}  // namespace detail

inline FactoryPtr nonrandomized_factory(StoppingPtr d, NonRandOptions options = {},
                                        unsigned precision_ceiling = kDefaultDigitCeiling,
                                        DyadicConvention convention =
                                            DyadicConvention::terminate_with_zeros) {
  return std::make_shared<detail::NonRandomizedFactory>(
      DigitOracle(std::move(d), convention, precision_ceiling), options);
}

}  // namespace bfactory
