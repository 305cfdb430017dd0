// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Full-size replication counts; a few minutes on a desktop.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bfactory/bfactory.hpp"

namespace {

using namespace bfactory;

constexpr std::uint64_t kSeed = 0xACCE97ULL;
constexpr double kZ = 4.0;

struct Outcome {
  bool passed = true;
  std::string detail;

  void fail(const std::string& why) {
    if (passed) {
      detail.clear();
    } else {
      detail += "; ";
    }
    passed = false;
    detail += why;
  }
};

std::string fmt(double x) { return format_gate_value(x); }

const std::vector<double> kGrid = {0.1, 0.5, 0.9};

/// One randomized run over the grid for every catalog entry, shared by
/// criteria 1 and 2.
const std::vector<RunReport>& catalog_runs() {
  static const std::vector<RunReport> runs = [] {
    std::vector<RunReport> out;
    const auto& entries = default_catalog_expressions();
    for (std::size_t e = 0; e < entries.size(); ++e) {
      ExperimentSpec spec;
      spec.expression = entries[e];
      spec.p_grid = kGrid;
      spec.replications = 1'000'000;
      spec.seed = kSeed + e;
      spec.z_gate = kZ;
      out.push_back(run(spec));
    }
    return out;
  }();
  return runs;
}

const Gate* find_gate(const PointReport& pt, const std::string& name) {
  for (const auto& g : pt.gates) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

Outcome gate_over_catalog(const std::string& name, double& worst) {
  Outcome o;
  worst = 0.0;
  for (const auto& r : catalog_runs()) {
    for (const auto& pt : r.points) {
      const Gate* g = find_gate(pt, name);
      if (g == nullptr) {
        o.fail(r.canonical + " p=" + fmt(pt.p) + ": no " + name + " gate");
        continue;
      }
      worst = std::max(worst, std::abs(g->statistic));
      if (!g->passed) o.fail(r.canonical + " p=" + fmt(pt.p) + " z=" + fmt(g->statistic));
    }
  }
  return o;
}

Outcome ac1_output_law() {
  double worst = 0.0;
  Outcome o = gate_over_catalog("mean_y", worst);
  if (o.passed) o.detail = "7 entries x 3 p, M=1e6, max |z| = " + fmt(worst);
  return o;
}

Outcome ac2_cost_law() {
  double worst = 0.0;
  Outcome o = gate_over_catalog("mean_n", worst);
  const Tally t = simulate(*build_factory("sqrt"), 0.25, 1'000'000, kSeed, 2);
  const double z = (t.mean_n() - 2.0) / t.se_n();
  if (std::abs(z) >= kZ) o.fail("sqrt p=0.25 mean N " + fmt(t.mean_n()) + " vs 2.0, z=" + fmt(z));
  if (o.passed) {
    o.detail = "max |z| = " + fmt(worst) + "; sqrt p=0.25 mean N = " + fmt(t.mean_n()) +
               " (target 2.0, z=" + fmt(z) + ")";
  }
  return o;
}

Outcome ac3_joint_law() {
  Outcome o;
  const SeriesPtr c = sqrt_series();
  const Tally t = simulate(*randomized_factory(c), 0.25, 1'000'000, kSeed, 3);
  std::string cells;
  for (std::size_t n = 1; n <= 5; ++n) {
    const Bounds expected = joint_stop_zero_probability(*c, n, 0.25);
    const std::uint64_t observed = n < t.joint_zero.size() ? t.joint_zero[n] : 0;
    const double z = stats::proportion_z(observed, t.reps, expected);
    cells += (n > 1 ? " " : "") + std::string("n=") + std::to_string(n) + ":z=" + fmt(z);
    if (std::abs(z) >= kZ) o.fail("cell n=" + std::to_string(n) + " z=" + fmt(z));
  }
  const Bounds first = joint_stop_zero_probability(*c, 1, 0.25);
  if (!first.contains(0.375)) o.fail("cell n=1 target is not 0.375");
  if (o.passed) o.detail = "sqrt p=0.25 M=1e6, " + cells;
  return o;
}

Outcome ac4_tail_bound() {
  Outcome o;
  double worst = -INFINITY;
  const auto& entries = default_catalog_expressions();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const Tally t = simulate(*build_factory(entries[e]), 0.25, 1'000'000, kSeed + e, 4);
    const Gate g = tail_bound_gate(t, 0.25, 30, kZ);
    worst = std::max(worst, g.statistic);
    if (!g.passed) o.fail(entries[e] + " excess z=" + fmt(g.statistic));
  }
  if (o.passed) o.detail = "7 entries, n<=30, max excess z = " + fmt(worst);
  return o;
}

Outcome ac5_nonrand_cost() {
  Outcome o;
  const FactoryPtr f = nonrandomized_factory(stopping_from_coefficients(sqrt_series()));
  // The sampler receives a uniform source that throws on any draw.
  struct Forbidding final : Factory {
    FactoryPtr inner;
    FactoryOutcome sample(CoinSource& coins, UniformSource&) const override {
      ForbiddenUniforms none;
      return inner->sample(coins, none);
    }
    std::string expression() const override { return inner->expression(); }
  };
  auto guarded = std::make_shared<Forbidding>();
  guarded->inner = f;
  Tally t;
  try {
    t = simulate(*guarded, 0.5, 100'000, kSeed, 5);
  } catch (const Error& e) {
    o.fail(std::string("sampler touched the uniform source: ") + e.what());
    return o;
  }
  const double target = 9.0 * std::sqrt(2.0);
  const double z = (t.mean_n() - target) / t.se_n();
  if (std::abs(z) >= kZ) o.fail("mean n_total " + fmt(t.mean_n()) + " z=" + fmt(z));
  if (t.uniforms != 0) o.fail("uniform draws recorded");
  if (o.passed) {
    o.detail = "mean n_total = " + fmt(t.mean_n()) + " vs 9*sqrt(2) = " + fmt(target) +
               ", z=" + fmt(z) + ", uniform draws = 0";
  }
  return o;
}

Outcome ac6_fair_bits() {
  Outcome o;
  std::string summary;
  for (double p : kGrid) {
    const FairBitReport r = fair_bit_experiment(p, 1'000'000, kSeed);
    const double zb = stats::proportion_z(r.ones, r.reps, Bounds::point(0.5));
    const double zp = (r.pairs_mean() - r.pairs_expected()) / r.pairs_se();
    if (std::abs(zb) >= kZ) o.fail("p=" + fmt(p) + " bit z=" + fmt(zb));
    if (std::abs(zp) >= kZ) o.fail("p=" + fmt(p) + " pairs z=" + fmt(zp));
    summary += (summary.empty() ? "" : " ") + std::string("p=") + fmt(p) + ":z_bit=" + fmt(zb) +
               ",z_pairs=" + fmt(zp);
  }
  if (o.passed) o.detail = "M=1e6, " + summary;
  return o;
}

Outcome ac7_dominance() {
  Outcome o;
  double tightest = INFINITY;
  for (const auto& e : default_catalog_expressions()) {
    const SeriesPtr c = build_series(*parse_expression(e));
    for (int i = 1; i <= 19; ++i) {
      const double p = 0.05 * i;
      const EvalResult en = expected_inputs_alg1(*c, p);
      const EvalResult lb = cramer_rao_bound(*c, p);
      tightest = std::min(tightest, en.value / lb.value);
      if (en.value + en.error_bound < lb.value - lb.error_bound) {
        o.fail(e + " p=" + fmt(p) + ": E[N]=" + fmt(en.value) + " < bound " + fmt(lb.value));
      }
    }
  }
  const SeriesPtr id = identity_series();
  for (int i = 1; i <= 19; ++i) {
    const double p = 0.05 * i;
    const EvalResult lb = cramer_rao_bound(*id, p);
    const EvalResult en = expected_inputs_alg1(*id, p);
    if (!lb.bounds().contains(1.0)) o.fail("f(p)=p bound " + fmt(lb.value) + " != 1 at p=" + fmt(p));
    if (!en.bounds().contains(1.0)) o.fail("f(p)=p E[N] " + fmt(en.value) + " != 1 at p=" + fmt(p));
  }
  const Tally t = simulate(*randomized_factory(id), 0.3, 100'000, kSeed, 7);
  if (t.n_max != 1 || t.n_sum != t.reps) o.fail("f(p)=p sampler read more than one input");
  if (o.passed) {
    o.detail = "7 entries x 19 p, min E[N]/bound = " + fmt(tightest) +
               "; f(p)=p: bound = 1, E[N] = 1 (every run reads one input)";
  }
  return o;
}

Outcome ac8_slopes() {
  Outcome o;
  std::vector<double> grid;
  for (int k = 2; k <= 10; ++k) grid.push_back(std::ldexp(1.0, -k));
  std::string summary;
  for (const char* a : {"3/10", "1/2", "7/10"}) {
    const std::string e = std::string("power:a=") + a;
    const SweepReport r = sweep_optimality({e}, grid, 200'000, kSeed, 0, kDefaultConfidence, kZ, 0.05);
    const SweepFit& fit = r.fits.at(0);
    const double target = parse_rational(a).get_d() - 1.0;
    const double gap = fit.empirical_slope - target;
    if (std::abs(gap) > 0.05) o.fail(e + " slope " + fmt(fit.empirical_slope) + " vs " + fmt(target));
    summary += (summary.empty() ? "" : " ") + std::string("a=") + a + ":" + fmt(fit.empirical_slope);
  }
  if (o.passed) o.detail = "p=2^-2..2^-10, slopes " + summary + " (targets a-1, tol 0.05)";
  return o;
}

Outcome ac9_oracle_equivalence() {
  Outcome o;
  for (const auto& e : default_catalog_expressions()) {
    const SeriesPtr c = build_series(*parse_expression(e));
    const SeriesPtr back = coefficients_from_stopping(stopping_from_coefficients(c));
    const std::size_t last = std::min<std::size_t>(64, c->terminal_index().value_or(64));
    for (std::size_t k = 1; k <= last; ++k) {
      const Interval a = back->coefficient_at(k);
      const Interval b = c->coefficient_at(k);
      // Tracked-precision entries: the two enclosures must overlap.
      const bool same = c->is_exact() ? a == b : (a.lo() <= b.hi() && b.lo() <= a.hi());
      if (!same) {
        o.fail(e + " round trip differs at k=" + std::to_string(k));
        break;
      }
    }
  }
  const SeriesPtr half = power_series(ratio(1, 2));
  const SeriesPtr root = sqrt_series();
  for (std::size_t k = 1; k <= 64; ++k) {
    if (!(half->coefficient_at(k) == root->coefficient_at(k))) {
      o.fail("power(1/2) != sqrt at k=" + std::to_string(k));
      break;
    }
  }
  const SeriesPtr quarter = compose(sqrt_series(), sqrt_series(), 32);
  const SeriesPtr target = power_series(ratio(1, 4));
  for (std::size_t k = 1; k <= 32; ++k) {
    if (!(quarter->coefficient_at(k) == target->coefficient_at(k))) {
      o.fail("compose(sqrt,sqrt) != power(1/4) at k=" + std::to_string(k));
      break;
    }
  }
  if (o.passed) {
    o.detail = "round trip k<=64 (exact for rational entries, overlapping enclosures for tracked ones), power(1/2)=sqrt k<=64, "
               "compose(sqrt,sqrt)=power(1/4) k<=32";
  }
  return o;
}

Outcome ac10_baseline() {
  Outcome o;
  const FactoryPtr fast = build_factory("sqrt");
  const FactoryPtr slow = build_factory("baseline(sqrt)");
  std::string summary;
  for (double p : {0.1, 0.25, 0.5}) {
    const Tally a = simulate(*fast, p, 100'000, kSeed, 10);
    const Tally b = simulate(*slow, p, 100'000, kSeed + 1, 11);
    const double z = stats::two_proportion_z(a.y_ones, a.reps, b.y_ones, b.reps);
    if (std::abs(z) >= kZ) o.fail("p=" + fmt(p) + " Y laws differ, z=" + fmt(z));
    if (!(a.mean_n() < b.mean_n())) {
      o.fail("p=" + fmt(p) + " mean N " + fmt(a.mean_n()) + " not below baseline " + fmt(b.mean_n()));
    }
    summary += (summary.empty() ? "" : " ") + std::string("p=") + fmt(p) + ":" + fmt(a.mean_n()) +
               "<" + fmt(b.mean_n()) + ",z=" + fmt(z) + ",trunc=" + std::to_string(b.truncated);
  }
  if (o.passed) o.detail = "M=1e5, cap=1e6, " + summary;
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"AC1", "output law Pr[Y=1] = f(p)", ac1_output_law},
      {"AC2", "cost law E[N] = f(p)/p", ac2_cost_law},
      {"AC3", "joint stopping law", ac3_joint_law},
      {"AC4", "tail bound Pr[N>n] <= (1-p)^n", ac4_tail_bound},
      {"AC5", "non-randomized cost", ac5_nonrand_cost},
      {"AC6", "fair-bit extraction", ac6_fair_bits},
      {"AC7", "lower-bound dominance", ac7_dominance},
      {"AC8", "asymptotic optimality slopes", ac8_slopes},
      {"AC9", "oracle equivalence", ac9_oracle_equivalence},
      {"AC10", "baseline comparison", ac10_baseline},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %s %s: %s (%.1fs)\n", o.passed ? "PASS" : "FAIL", c.id, c.title,
                o.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += o.passed ? 0 : 1;
  }
  std::printf("%d of %zu acceptance criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
