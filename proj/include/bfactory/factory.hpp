// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized Bernoulli factory, the two-phase baseline, and the output-level
// transforms (complement, input flip, alpha scaling, product).

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bfactory/errors.hpp"
#include "bfactory/numeric.hpp"
#include "bfactory/series.hpp"
#include "bfactory/sources.hpp"

namespace bfactory {

/// One loop iteration: the coin X_i and, when it was needed, the stop flag V_i.
struct TraceEvent {
  bool x = false;
  std::optional<bool> v;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct FactoryOutcome {
  bool y = false;
  std::uint64_t n = 0;         ///< coin inputs consumed
  std::uint64_t uniforms = 0;  ///< uniform variates used
  std::uint64_t outer = 0;     ///< loop iterations of the top-level sampler
  std::uint64_t pairs = 0;     ///< von Neumann pairs (non-randomized samplers)
  std::optional<std::vector<TraceEvent>> trace;
};

struct SamplerOptions {
  unsigned precision_ceiling = kDefaultDigitCeiling;
  bool trace = false;
};

inline constexpr std::uint64_t kDefaultBaselineCap = 1'000'000;

/// Decides U < d for a fresh uniform U, reading U's bits lazily. The fast
/// 64-bit comparison settles all but a ~2^-50 fraction of draws; otherwise
/// more bits of U are read and, for enclosures, `exact` is asked for a
/// tighter enclosure of d at doubled precision.
inline bool uniform_below(UniformSource& uniforms, const FastStop& fast,
                          const std::function<Interval(unsigned)>& exact,
                          unsigned ceiling = kDefaultDigitCeiling) {
  const std::uint64_t w = uniforms.word();
  if (w < fast.lo_fixed) return true;
  if (fast.hi_bounded() && w >= fast.hi_fixed) return false;

  BigInt prefix(static_cast<unsigned long>(w));
  unsigned bits = 64;
  unsigned precision = kDefaultPrecision;
  Interval d = exact(precision);
  for (;;) {
    const Rational u_lo = from_scaled(prefix, bits);
    const Rational u_hi = from_scaled(BigInt(prefix + 1), bits);
    if (u_hi <= d.lo()) return true;
    if (u_lo >= d.hi()) return false;
    if (!d.is_exact() && d.width() >= u_hi - u_lo) {
      precision *= 2;
      if (precision > ceiling) {
        throw InsufficientPrecision("cannot order a uniform against d within " +
                                    std::to_string(ceiling) + " bits");
      }
      d = exact(precision);
      continue;
    }
    prefix <<= 64;
    prefix += static_cast<unsigned long>(uniforms.word());
    bits += 64;
  }
}

/// V ~ Bernoulli(d_k) from one uniform variate; d in {0, 1} costs nothing.
inline bool stop_flag(const StoppingSequence& d, std::size_t k, UniformSource& uniforms,
                      std::uint64_t& used, unsigned ceiling) {
  const FastStop& fast = d.fast_at(k);
  if (fast.is_one) return true;
  if (fast.is_zero) return false;
  ++used;
  return uniform_below(uniforms, fast, [&](unsigned bits) { return d.d_at(k, bits); }, ceiling);
}

/// The randomized factory: at step i take X_i; stop with Y = 1 when X_i = 1,
/// otherwise stop with Y = 0 when U_i < d_i. The uniform is only drawn when
/// X_i = 0, since V_i does not affect the output otherwise.
inline FactoryOutcome sample_algorithm1(const StoppingSequence& d, CoinSource& coins,
                                        UniformSource& uniforms,
                                        const SamplerOptions& options = {}) {
  FactoryOutcome out;
  if (options.trace) out.trace.emplace();
  for (std::size_t i = 1;; ++i) {
    const bool x = coins.flip();
    ++out.n;
    if (x) {
      if (out.trace) out.trace->push_back({true, std::nullopt});
      out.y = true;
      out.outer = i;
      return out;
    }
    const bool v = stop_flag(d, i, uniforms, out.uniforms, options.precision_ceiling);
    if (out.trace) out.trace->push_back({false, v});
    if (v) {
      out.y = false;
      out.outer = i;
      return out;
    }
  }
}

/// Two-phase baseline: draw L with Pr[L = k] = c_k sequentially through the
/// d_k, then read L coins and output 1 unless all of them are 0. Throws
/// TruncationError when L would exceed `cap`; no coin is read in that case.
inline FactoryOutcome sample_wastlund_baseline(const StoppingSequence& d, CoinSource& coins,
                                               UniformSource& uniforms,
                                               std::uint64_t cap = kDefaultBaselineCap,
                                               const SamplerOptions& options = {}) {
  FactoryOutcome out;
  std::uint64_t length = 0;
  for (std::size_t k = 1;; ++k) {
    if (k > cap) {
      throw TruncationError("baseline length exceeded cap " + std::to_string(cap), cap);
    }
    if (stop_flag(d, k, uniforms, out.uniforms, options.precision_ceiling)) {
      length = k;
      break;
    }
  }
  if (options.trace) out.trace.emplace();
  bool any_one = false;
  for (std::uint64_t i = 1; i <= length; ++i) {
    const bool x = coins.flip();
    any_one = any_one || x;
    if (out.trace) out.trace->push_back({x, i == length});
  }
  out.n = length;
  out.outer = length;
  out.y = any_one;
  return out;
}

// ---------------------------------------------------------------------------
// Composable factories

/// A sampler for some f(p). Implementations are immutable and may be shared
/// across threads; all randomness comes from the sources passed in.
class Factory {
 public:
  virtual ~Factory() = default;
  virtual FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const = 0;
  virtual std::string expression() const = 0;
};

using FactoryPtr = std::shared_ptr<const Factory>;

/// Bernoulli(alpha) for a known constant alpha.
class ConstantCoin {
 public:
  explicit ConstantCoin(Rational alpha) : alpha_(std::move(alpha)) {}
  virtual ~ConstantCoin() = default;
  const Rational& alpha() const { return alpha_; }
  virtual bool draw(CoinSource& coins, UniformSource& uniforms, FactoryOutcome& out) const = 0;

 private:
  Rational alpha_;
};

class UniformConstantCoin final : public ConstantCoin {
 public:
  explicit UniformConstantCoin(Rational alpha)
      : ConstantCoin(std::move(alpha)), fast_(FastStop::from_exact(this->alpha())) {}
  bool draw(CoinSource&, UniformSource& uniforms, FactoryOutcome& out) const override {
    if (fast_.is_one) return true;
    ++out.uniforms;
    return uniform_below(uniforms, fast_, [this](unsigned) { return Interval(alpha()); });
  }

 private:
  FastStop fast_;
};

namespace detail {

inline void absorb(FactoryOutcome& into, const FactoryOutcome& part) {
  into.n += part.n;
  into.uniforms += part.uniforms;
  into.outer += part.outer;
  into.pairs += part.pairs;
}

class RandomizedFactory final : public Factory {
 public:
  RandomizedFactory(StoppingPtr d, SamplerOptions options)
      : d_(std::move(d)), options_(options) {}
  FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const override {
    return sample_algorithm1(*d_, coins, uniforms, options_);
  }
  std::string expression() const override { return d_->label(); }

 private:
  StoppingPtr d_;
  SamplerOptions options_;
};

class BaselineFactory final : public Factory {
 public:
  BaselineFactory(StoppingPtr d, std::uint64_t cap, SamplerOptions options)
      : d_(std::move(d)), cap_(cap), options_(options) {}
  FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const override {
    return sample_wastlund_baseline(*d_, coins, uniforms, cap_, options_);
  }
  std::string expression() const override {
    std::string out = "baseline(" + d_->label();
    if (cap_ != kDefaultBaselineCap) out += ",cap=" + std::to_string(cap_);
    return out + ")";
  }

 private:
  StoppingPtr d_;
  std::uint64_t cap_;
  SamplerOptions options_;
};

class ComplementFactory final : public Factory {
 public:
  explicit ComplementFactory(FactoryPtr inner) : inner_(std::move(inner)) {}
  FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const override {
    FactoryOutcome out = inner_->sample(coins, uniforms);
    out.y = !out.y;
    return out;
  }
  std::string expression() const override { return "complement(" + inner_->expression() + ")"; }

 private:
  FactoryPtr inner_;
};

class FlipInputFactory final : public Factory {
 public:
  explicit FlipInputFactory(FactoryPtr inner) : inner_(std::move(inner)) {}
  FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const override {
    FlippedCoins flipped(coins);
    return inner_->sample(flipped, uniforms);
  }
  std::string expression() const override { return "flip_input(" + inner_->expression() + ")"; }

 private:
  FactoryPtr inner_;
};

/// y * B with B ~ Bernoulli(alpha) drawn first; the inner factory is skipped
/// (zero coins read) when B = 0.
class ScaleFactory final : public Factory {
 public:
  ScaleFactory(FactoryPtr inner, std::shared_ptr<const ConstantCoin> coin)
      : inner_(std::move(inner)), coin_(std::move(coin)) {
    if (coin_->alpha() <= 0 || coin_->alpha() > 1) {
      throw DomainError("scale: alpha must lie in (0,1], got " + to_string(coin_->alpha()));
    }
  }
  FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const override {
    FactoryOutcome out;
    const std::uint64_t before = coins.draws();
    const bool keep = coin_->draw(coins, uniforms, out);
    out.n = coins.draws() - before;
    if (!keep) return out;
    const FactoryOutcome inner = inner_->sample(coins, uniforms);
    absorb(out, inner);
    out.y = inner.y;
    out.trace = inner.trace;
    return out;
  }
  std::string expression() const override {
    return "scale(" + inner_->expression() + ",alpha=" + to_string(coin_->alpha()) + ")";
  }

 private:
  FactoryPtr inner_;
  std::shared_ptr<const ConstantCoin> coin_;
};

/// y1 * y2, evaluating the second factory only when y1 = 1.
class ProductFactory final : public Factory {
 public:
  ProductFactory(FactoryPtr first, FactoryPtr second)
      : first_(std::move(first)), second_(std::move(second)) {}
  FactoryOutcome sample(CoinSource& coins, UniformSource& uniforms) const override {
    FactoryOutcome out = first_->sample(coins, uniforms);
    out.trace.reset();
    if (!out.y) return out;
    const FactoryOutcome second = second_->sample(coins, uniforms);
    absorb(out, second);
    out.y = second.y;
    return out;
  }
  std::string expression() const override {
    return "prod(" + first_->expression() + "," + second_->expression() + ")";
  }

 private:
  FactoryPtr first_;
  FactoryPtr second_;
};

}  // namespace detail

inline FactoryPtr randomized_factory(StoppingPtr d, SamplerOptions options = {}) {
  return std::make_shared<detail::RandomizedFactory>(std::move(d), options);
}
inline FactoryPtr randomized_factory(SeriesPtr c, SamplerOptions options = {}) {
  return randomized_factory(stopping_from_coefficients(std::move(c)), options);
}
inline FactoryPtr baseline_factory(StoppingPtr d, std::uint64_t cap = kDefaultBaselineCap,
                                   SamplerOptions options = {}) {
  return std::make_shared<detail::BaselineFactory>(std::move(d), cap, options);
}
inline FactoryPtr transform_output_complement(FactoryPtr inner) {
  return std::make_shared<detail::ComplementFactory>(std::move(inner));
}
inline FactoryPtr transform_input_complement(FactoryPtr inner) {
  return std::make_shared<detail::FlipInputFactory>(std::move(inner));
}
inline FactoryPtr transform_scale(FactoryPtr inner, std::shared_ptr<const ConstantCoin> coin) {
  return std::make_shared<detail::ScaleFactory>(std::move(inner), std::move(coin));
}
/// alpha-scaling with the alpha-coin drawn from the uniform source.
inline FactoryPtr transform_scale(FactoryPtr inner, const Rational& alpha) {
  return transform_scale(std::move(inner), std::make_shared<UniformConstantCoin>(alpha));
}
inline FactoryPtr transform_product(FactoryPtr first, FactoryPtr second) {
  return std::make_shared<detail::ProductFactory>(std::move(first), std::move(second));
}

}  // namespace bfactory
