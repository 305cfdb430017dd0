// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Input streams for the factories: the biased coin X_1, X_2, ... and the
// auxiliary uniform variables, the latter delivered as 64-bit words of the
// binary expansion so comparisons can be refined lazily.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "bfactory/errors.hpp"

namespace bfactory {

/// Stream of i.i.d. Bernoulli(p) bits. Counts every bit handed out.
class CoinSource {
 public:
  virtual ~CoinSource() = default;

  bool flip() {
    ++draws_;
    return next_bit();
  }
  std::uint64_t draws() const { return draws_; }

 protected:
  virtual bool next_bit() = 0;

 private:
  std::uint64_t draws_ = 0;
};

/// Stream of uniform variates on (0,1), read 64 bits at a time from the most
/// significant end. Counts words handed out.
class UniformSource {
 public:
  virtual ~UniformSource() = default;

  std::uint64_t word() {
    ++words_;
    return next_word();
  }
  std::uint64_t words() const { return words_; }

 protected:
  virtual std::uint64_t next_word() = 0;

 private:
  std::uint64_t words_ = 0;
};

/// Engine for one replication block. The seed sequence mixes the experiment
/// seed, a stream tag and the block index, so blocks are reproducible
/// independently of how they are scheduled.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
  return std::mt19937_64(seq);
}

/// Bernoulli(p) bits: X = 1 iff a 64-bit word is below floor(p 2^64). The
/// simulated parameter is floor(p 2^64) / 2^64, within 2^-64 of p.
class SimulatedCoins final : public CoinSource {
 public:
  SimulatedCoins(double p, std::mt19937_64 engine) : engine_(std::move(engine)) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("coin parameter must lie in (0,1)");
    threshold_ = static_cast<std::uint64_t>(std::ldexp(p, 64));
  }
  SimulatedCoins(double p, std::uint64_t seed) : SimulatedCoins(p, make_engine(seed, 0, 0)) {}

 protected:
  bool next_bit() override { return engine_() < threshold_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t threshold_ = 0;
};

class SimulatedUniforms final : public UniformSource {
 public:
  explicit SimulatedUniforms(std::mt19937_64 engine) : engine_(std::move(engine)) {}
  explicit SimulatedUniforms(std::uint64_t seed) : engine_(make_engine(seed, 1, 0)) {}

 protected:
  std::uint64_t next_word() override { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Replays a fixed bit sequence; running out is an error.
class ScriptedCoins final : public CoinSource {
 public:
  explicit ScriptedCoins(std::vector<bool> bits) : bits_(std::move(bits)) {}
  std::size_t remaining() const { return bits_.size() - next_; }

 protected:
  bool next_bit() override {
    if (next_ >= bits_.size()) throw Error("scripted coin source exhausted");
    return bits_[next_++];
  }

 private:
  std::vector<bool> bits_;
  std::size_t next_ = 0;
};

class ScriptedUniforms final : public UniformSource {
 public:
  explicit ScriptedUniforms(std::vector<std::uint64_t> words) : words_(std::move(words)) {}

 protected:
  std::uint64_t next_word() override {
    if (next_ >= words_.size()) throw Error("scripted uniform source exhausted");
    return words_[next_++];
  }

 private:
  std::vector<std::uint64_t> words_;
  std::size_t next_ = 0;
};

/// Uniform source for code paths that must not consume uniforms.
class ForbiddenUniforms final : public UniformSource {
 protected:
  std::uint64_t next_word() override {
    throw Error("uniform variate requested by a non-randomized sampler");
  }
};

/// Presents 1 - X_i for each bit of the wrapped source.
class FlippedCoins final : public CoinSource {
 public:
  explicit FlippedCoins(CoinSource& inner) : inner_(inner) {}

 protected:
  bool next_bit() override { return !inner_.flip(); }

 private:
  CoinSource& inner_;
};

}  // namespace bfactory
