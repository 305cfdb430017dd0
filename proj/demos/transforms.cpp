// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Builds factories from expressions and prints their simulated and exact
// laws at p = 0.4.

#include <cstdio>

#include "bfactory/bfactory.hpp"

int main() {
  using namespace bfactory;
  const double p = 0.4;
  const char* expressions[] = {
      "compose(sqrt,sqrt,order=32)",       "pc(sqrt,entropy)",
      "convex(power:a=1/2,entropy,alpha=0.3)", "complement(sqrt)",
      "flip_input(sqrt)",                  "scale(sqrt,alpha=1/2)",
      "prod(sqrt,sqrt)",                   "baseline(finite:[1/2,1/2])",
  };
  std::printf("%-42s %10s %18s %10s %18s\n", "expression", "mean Y", "f(p)", "mean N", "E[N]");
  std::uint64_t seed = 10;
  for (const char* text : expressions) {
    const ExprPtr node = parse_expression(text);
    const Tally t = simulate(*build_factory(*node), p, 100'000, seed++);
    const ReferenceLaw law = reference_law(*node, p);
    std::printf("%-42s %10.5f [%.5f,%.5f] %10.4f ", to_string(*node).c_str(), t.mean_y(),
                law.f.lo, law.f.hi, t.mean_n());
    if (law.expected_n) {
      std::printf("[%.4f,%.4f]\n", law.expected_n->lo, law.expected_n->hi);
    } else {
      std::printf("%18s\n", "n/a");
    }
  }
  return 0;
}
