// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Reduced-size run of the invariant checks of every module.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bfactory/analysis.hpp"
#include "bfactory/expression.hpp"
#include "bfactory/harness.hpp"
#include "bfactory/nonrand.hpp"
#include "bfactory/series.hpp"

namespace bfactory {

struct SelftestOptions {
  std::uint64_t replications = 10'000;
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 0;
  double z_gate = kDefaultZGate;
};

namespace detail {

inline Gate check(std::string name, const std::function<std::string()>& body) {
  Gate g;
  g.name = std::move(name);
  g.threshold = 0;
  try {
    g.detail = body();
    g.passed = g.detail.empty();
  } catch (const std::exception& e) {
    g.passed = false;
    g.detail = std::string("exception: ") + e.what();
  }
  return g;
}

inline std::string join_failed(const std::vector<Gate>& gates) {
  std::string out;
  for (const auto& g : gates) {
    if (g.passed) continue;
    if (!out.empty()) out += "; ";
    out += g.name + " z=" + format_gate_value(g.statistic);
  }
  return out;
}

}  // namespace detail

inline std::vector<Gate> run_selftest(const SelftestOptions& options = {}) {
  std::vector<Gate> results;
  const auto& entries = default_catalog_expressions();

  // series
  results.push_back(detail::check("series.nonnegative_bounded", [&]() -> std::string {
    for (const auto& e : entries) {
      const SeriesPtr c = build_series(*parse_expression(e));
      for (std::size_t k = 1; k <= 64; ++k) {
        if (c->coefficient_at(k).hi() < 0) return e + ": negative c_" + std::to_string(k);
      }
      if (c->partial_sum_at(64).lo() > 1) return e + ": partial sum above one";
    }
    return {};
  }));
  results.push_back(detail::check("series.round_trip", [&]() -> std::string {
    for (const auto& e : entries) {
      const SeriesPtr c = build_series(*parse_expression(e));
      if (!c->is_exact()) continue;
      const SeriesPtr back = coefficients_from_stopping(stopping_from_coefficients(c));
      const std::size_t last = c->terminal_index().value_or(64);
      for (std::size_t k = 1; k <= last; ++k) {
        if (!(back->coefficient_at(k) == c->coefficient_at(k))) {
          return e + ": mismatch at k=" + std::to_string(k);
        }
      }
    }
    return {};
  }));
  results.push_back(detail::check("series.catalog_cross_checks", []() -> std::string {
    const SeriesPtr half = power_series(Rational(1, 2));
    const SeriesPtr root = sqrt_series();
    const SeriesPtr mobius = mobius_sqrt_series();
    for (std::size_t k = 1; k <= 64; ++k) {
      if (!(half->coefficient_at(k) == root->coefficient_at(k))) return "power(1/2) != sqrt";
      if (k <= 63 && !(mobius->coefficient_at(k).lo() == 2 * root->coefficient_at(k + 1).lo())) {
        return "mobius_sqrt != 2 sqrt(k+1)";
      }
    }
    const SeriesPtr quarter = compose(sqrt_series(), sqrt_series(), 32);
    const SeriesPtr target = power_series(Rational(1, 4));
    for (std::size_t k = 1; k <= 32; ++k) {
      if (!(quarter->coefficient_at(k) == target->coefficient_at(k))) {
        return "compose(sqrt,sqrt) != power(1/4) at k=" + std::to_string(k);
      }
    }
    return {};
  }));

  // factory: output and cost laws, tail bound
  for (std::size_t e = 0; e < entries.size(); ++e) {
    results.push_back(detail::check("factory.laws " + entries[e], [&]() -> std::string {
      ExperimentSpec spec;
      spec.expression = entries[e];
      spec.p_grid = {0.1, 0.5, 0.9};
      spec.replications = options.replications;
      spec.seed = options.seed + e;
      spec.threads = options.threads;
      spec.z_gate = options.z_gate;
      const RunReport r = run(spec);
      std::string failed;
      for (const auto& pt : r.points) {
        const std::string f = detail::join_failed(pt.gates);
        if (!f.empty()) failed += "p=" + format_gate_value(pt.p) + ": " + f + " ";
      }
      return failed;
    }));
  }
  results.push_back(detail::check("factory.joint_law sqrt p=0.25", [&]() -> std::string {
    const SeriesPtr c = sqrt_series();
    const Tally t = simulate(*randomized_factory(c), 0.25, options.replications, options.seed,
                             77, options.threads);
    const JointLawResult j = test_joint_law(t, *c, 0.25, options.z_gate);
    return j.passed ? std::string() : "joint law rejected";
  }));
  results.push_back(detail::check("factory.baseline_comparison sqrt p=0.5", [&]() -> std::string {
    const FactoryPtr fast = build_factory("sqrt");
    const FactoryPtr slow = build_factory("baseline(sqrt)");
    const Tally a = simulate(*fast, 0.5, options.replications, options.seed, 91, options.threads);
    const Tally b = simulate(*slow, 0.5, options.replications, options.seed + 1, 92, options.threads);
    const double z = stats::two_proportion_z(a.y_ones, a.reps, b.y_ones, b.reps);
    if (std::abs(z) >= options.z_gate) return "Y laws differ, z=" + format_gate_value(z);
    if (!(a.mean_n() < b.mean_n())) return "baseline not more expensive";
    return {};
  }));

  // nonrand
  results.push_back(detail::check("nonrand.cost sqrt p=0.5", [&]() -> std::string {
    ExperimentSpec spec;
    spec.expression = "sqrt";
    spec.p_grid = {0.5};
    spec.replications = options.replications;
    spec.seed = options.seed;
    spec.threads = options.threads;
    spec.build.algorithm = Algorithm::nonrandomized;
    const RunReport r = run(spec);
    if (r.points[0].tally.uniforms != 0) return "uniforms consumed";
    return detail::join_failed(r.points[0].gates);
  }));
  for (double p : {0.1, 0.5, 0.9}) {
    results.push_back(detail::check("nonrand.von_neumann p=" + format_gate_value(p),
                                    [&]() -> std::string {
      const FairBitReport r = fair_bit_experiment(p, options.replications, options.seed);
      const double zb = stats::proportion_z(r.ones, r.reps, Bounds::point(0.5));
      const double zp = stats::z_distance(r.pairs_mean(), Bounds::point(r.pairs_expected()),
                                          r.pairs_se());
      if (std::abs(zb) >= options.z_gate) return "bit mean z=" + format_gate_value(zb);
      if (std::abs(zp) >= options.z_gate) return "pairs mean z=" + format_gate_value(zp);
      return {};
    }));
  }

  // analysis
  results.push_back(detail::check("analysis.dominance", [&]() -> std::string {
    for (const auto& e : entries) {
      const SeriesPtr c = build_series(*parse_expression(e));
      for (int i = 1; i <= 19; ++i) {
        const double p = 0.05 * i;
        const EvalResult en = expected_inputs_alg1(*c, p);
        const EvalResult lb = cramer_rao_bound(*c, p);
        if (en.value + en.error_bound < lb.value - lb.error_bound) {
          return e + " at p=" + format_gate_value(p);
        }
      }
    }
    return {};
  }));
  return results;
}

}  // namespace bfactory
