// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Samples sqrt(p) from a p = 0.3 coin with both factories and compares the
// empirical output mean and input count with the exact values.

#include <cstdio>

#include "bfactory/bfactory.hpp"

int main() {
  using namespace bfactory;
  const double p = 0.3;
  const SeriesPtr c = sqrt_series();
  const StoppingPtr d = stopping_from_coefficients(c);

  std::printf("first stopping probabilities:");
  for (std::size_t k = 1; k <= 5; ++k) std::printf(" %s", to_string(d->d_at(k).lo()).c_str());
  std::printf("\n");

  const FactoryPtr randomized = randomized_factory(d);
  const FactoryPtr digits = nonrandomized_factory(d);
  const std::uint64_t reps = 200'000;
  const Tally a = simulate(*randomized, p, reps, 1);
  const Tally b = simulate(*digits, p, reps, 2);

  const EvalResult f = eval_f(*c, p);
  std::printf("f(p)               exact %.6f\n", f.value);
  std::printf("randomized         mean Y %.6f  mean N %.4f (exact %.4f)\n", a.mean_y(), a.mean_n(),
              expected_inputs_alg1(*c, p).value);
  std::printf("non-randomized     mean Y %.6f  mean N %.4f (exact %.4f), uniforms used %llu\n",
              b.mean_y(), b.mean_n(), expected_inputs_alg2(*c, p).value,
              static_cast<unsigned long long>(b.uniforms));
  std::printf("lower bound on E[N] for any fast factory: %.4f\n", cramer_rao_bound(*c, p).value);
  return 0;
}
