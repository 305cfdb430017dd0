// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Monte Carlo experiment engine. Replications run in fixed blocks, each
// block with its own engines derived from (seed, stream, block), so results
// do not depend on the number of worker threads.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bfactory/analysis.hpp"
#include "bfactory/errors.hpp"
#include "bfactory/expression.hpp"
#include "bfactory/factory.hpp"
#include "bfactory/nonrand.hpp"
#include "bfactory/series.hpp"
#include "bfactory/sources.hpp"
#include "bfactory/stats.hpp"

namespace bfactory {

inline constexpr std::uint64_t kDefaultSeed = 0x5EED2026ULL;
inline constexpr std::uint64_t kBlockSize = 4096;
inline constexpr std::size_t kHistogramLimit = std::size_t{1} << 16;
inline constexpr double kDefaultConfidence = 0.9999;
inline constexpr double kDefaultZGate = 4.0;
inline constexpr double kChiSquareSignificance = 1e-3;

struct ExperimentSpec {
  std::string expression;
  std::vector<double> p_grid;
  std::uint64_t replications = 100'000;
  std::uint64_t seed = kDefaultSeed;
  BuildOptions build;
  double confidence = kDefaultConfidence;
  double z_gate = kDefaultZGate;
  unsigned threads = 0;  ///< 0: hardware concurrency
  std::size_t tail_check_max = 30;

  void validate() const {
    if (expression.empty()) throw DomainError("experiment needs an expression");
    if (p_grid.empty()) throw DomainError("experiment needs at least one p");
    for (double p : p_grid) {
      if (!(p > 0.0 && p < 1.0)) throw DomainError("every p must lie in (0,1)");
    }
    if (replications == 0) throw DomainError("replications must be at least 1");
    if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("confidence must lie in (0,1)");
  }
};

/// Integer aggregates of a batch of replications. merge() is associative
/// and commutative, so any grouping of blocks yields the same totals.
struct Tally {
  std::uint64_t reps = 0;       ///< completed replications
  std::uint64_t truncated = 0;  ///< baseline runs aborted at the cap
  std::uint64_t y_ones = 0;
  std::uint64_t n_sum = 0;
  unsigned __int128 n_square_sum = 0;
  std::uint64_t n_max = 0;
  std::uint64_t uniforms = 0;
  std::uint64_t pairs = 0;
  std::uint64_t outer_sum = 0;
  std::uint64_t n_overflow = 0;  ///< n at or beyond kHistogramLimit
  std::vector<std::uint64_t> n_hist;
  std::vector<std::uint64_t> outer_hist;
  std::vector<std::uint64_t> joint_zero;  ///< counts of (outer = n, y = 0)

  static void bump(std::vector<std::uint64_t>& hist, std::uint64_t value,
                   std::uint64_t count = 1) {
    if (value >= kHistogramLimit) return;
    if (hist.size() <= value) hist.resize(value + 1, 0);
    hist[value] += count;
  }

  void record(const FactoryOutcome& o) {
    ++reps;
    y_ones += o.y ? 1 : 0;
    n_sum += o.n;
    n_square_sum += static_cast<unsigned __int128>(o.n) * o.n;
    n_max = std::max(n_max, o.n);
    uniforms += o.uniforms;
    pairs += o.pairs;
    outer_sum += o.outer;
    if (o.n >= kHistogramLimit) ++n_overflow;
    bump(n_hist, o.n);
    bump(outer_hist, o.outer);
    if (!o.y) bump(joint_zero, o.outer);
  }

  void merge(const Tally& t) {
    reps += t.reps;
    truncated += t.truncated;
    y_ones += t.y_ones;
    n_sum += t.n_sum;
    n_square_sum += t.n_square_sum;
    n_max = std::max(n_max, t.n_max);
    uniforms += t.uniforms;
    pairs += t.pairs;
    outer_sum += t.outer_sum;
    n_overflow += t.n_overflow;
    for (std::size_t i = 0; i < t.n_hist.size(); ++i) bump(n_hist, i, t.n_hist[i]);
    for (std::size_t i = 0; i < t.outer_hist.size(); ++i) bump(outer_hist, i, t.outer_hist[i]);
    for (std::size_t i = 0; i < t.joint_zero.size(); ++i) bump(joint_zero, i, t.joint_zero[i]);
  }

  double mean_y() const { return reps ? static_cast<double>(y_ones) / reps : 0.0; }
  double mean_n() const { return reps ? static_cast<double>(n_sum) / reps : 0.0; }
  double var_n() const {
    if (reps < 2) return 0.0;
    const long double m = static_cast<long double>(n_sum) / reps;
    const long double sq = static_cast<long double>(n_square_sum) / reps;
    const long double v = (sq - m * m) * reps / (reps - 1);
    return v > 0 ? static_cast<double>(v) : 0.0;
  }
  double se_n() const { return reps ? std::sqrt(var_n() / reps) : 0.0; }

  /// Empirical Pr[N > n] for n = 0 .. min(n_max, kHistogramLimit - 1).
  std::vector<double> tail_curve() const {
    std::vector<double> tail;
    if (reps == 0) return tail;
    std::uint64_t above = reps;
    for (std::size_t n = 0; n < n_hist.size(); ++n) {
      above -= n_hist[n];
      tail.push_back(static_cast<double>(above) / reps);
    }
    return tail;
  }
  /// Empirical Pr[N > n] for any n (0 beyond the observed range).
  double tail_at(std::size_t n) const {
    if (reps == 0) return 0.0;
    if (n >= kHistogramLimit) return static_cast<double>(n_overflow) / reps;
    std::uint64_t at_most = 0;
    for (std::size_t i = 0; i <= n && i < n_hist.size(); ++i) at_most += n_hist[i];
    return static_cast<double>(reps - at_most) / reps;
  }
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs `reps` replications of `factory` at parameter p. Stream `tag`
/// separates independent experiments sharing a seed.
inline Tally simulate(const Factory& factory, double p, std::uint64_t reps, std::uint64_t seed,
                      std::uint64_t tag = 0, unsigned threads = 0) {
  const std::uint64_t blocks = (reps + kBlockSize - 1) / kBlockSize;
  std::atomic<std::uint64_t> next{0};
  std::mutex mutex;
  Tally total;
  std::exception_ptr failure;
  auto worker = [&] {
    Tally local;
    try {
      for (;;) {
        const std::uint64_t b = next.fetch_add(1);
        if (b >= blocks) break;
        SimulatedCoins coins(p, make_engine(seed, 2 * tag, b));
        SimulatedUniforms uniforms(make_engine(seed, 2 * tag + 1, b));
        const std::uint64_t count = std::min(kBlockSize, reps - b * kBlockSize);
        for (std::uint64_t r = 0; r < count; ++r) {
          try {
            local.record(factory.sample(coins, uniforms));
          } catch (const TruncationError&) {
            ++local.truncated;
          }
        }
      }
    } catch (...) {
      std::lock_guard lock(mutex);
      if (!failure) failure = std::current_exception();
      next.store(blocks);
    }
    std::lock_guard lock(mutex);
    total.merge(local);
  };
  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(threads), blocks));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return total;
}

/// Short human-readable number for gate details.
inline std::string format_gate_value(double x) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.6g", x);
  return buffer;
}

struct Gate {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool passed = true;
  std::string detail;
};

struct PointReport {
  double p = 0.0;
  Tally tally;
  stats::Range y_ci;
  stats::Range n_ci;
  ReferenceLaw reference;
  std::vector<Gate> gates;

  double mean_y() const { return tally.mean_y(); }
  double mean_n() const { return tally.mean_n(); }
  bool passed() const {
    return std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.passed; });
  }
};

struct RunReport {
  ExperimentSpec spec;
  std::string canonical;  ///< canonical expression text
  std::vector<PointReport> points;

  bool passed() const {
    return std::all_of(points.begin(), points.end(), [](const PointReport& r) { return r.passed(); });
  }
};

namespace detail {

inline Gate proportion_gate(std::string name, std::uint64_t ones, std::uint64_t reps,
                            Bounds expected, double z_gate) {
  Gate g;
  g.name = std::move(name);
  g.statistic = stats::proportion_z(ones, reps, expected);
  g.threshold = z_gate;
  g.passed = std::abs(g.statistic) < z_gate;
  return g;
}

inline Gate mean_gate(std::string name, double mean, double se, Bounds expected, double z_gate) {
  Gate g;
  g.name = std::move(name);
  g.statistic = stats::z_distance(mean, expected, se);
  g.threshold = z_gate;
  g.passed = std::abs(g.statistic) < z_gate;
  return g;
}

}  // namespace detail

/// Upper tail gate: empirical Pr[N > n] <= (1-p)^n + z SE for n = 1..max_n,
/// with SE the binomial standard error at the bound.
inline Gate tail_bound_gate(const Tally& tally, double p, std::size_t max_n, double z_gate) {
  Gate g;
  g.name = "tail";
  g.threshold = z_gate;
  g.statistic = -std::numeric_limits<double>::infinity();
  double bound = 1.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    bound *= 1.0 - p;
    const double b = std::min(1.0, bound * (1.0 + 1e-12));
    const double se = std::sqrt(b * (1.0 - b) / static_cast<double>(tally.reps));
    const double emp = tally.tail_at(n);
    const double z = se > 0 ? (emp - b) / se : (emp > b ? INFINITY : 0.0);
    if (z > g.statistic) {
      g.statistic = z;
      g.detail = "worst n=" + std::to_string(n);
    }
  }
  g.passed = g.statistic < z_gate;
  return g;
}

/// Builds the per-point report and its gates from a tally.
inline PointReport make_point_report(const ExprNode& node, const ExperimentSpec& spec, double p,
                                     Tally tally) {
  PointReport r;
  r.p = p;
  r.tally = std::move(tally);
  const Tally& t = r.tally;
  r.y_ci = stats::wilson_interval(t.y_ones, t.reps, spec.confidence);
  r.n_ci = stats::mean_interval(t.mean_n(), t.se_n(), spec.confidence);
  r.reference = reference_law(node, p, spec.build);
  if (t.reps == 0) {
    r.gates.push_back({"replications", 0, 1, false, "no completed replications"});
    return r;
  }
  r.gates.push_back(detail::proportion_gate("mean_y", t.y_ones, t.reps, r.reference.f, spec.z_gate));
  if (r.reference.expected_n) {
    r.gates.push_back(
        detail::mean_gate("mean_n", t.mean_n(), t.se_n(), *r.reference.expected_n, spec.z_gate));
  }
  if (node.is_series() && spec.build.algorithm == Algorithm::randomized) {
    r.gates.push_back(tail_bound_gate(t, p, spec.tail_check_max, spec.z_gate));
  }
  return r;
}

/// Runs every point of the spec. Deterministic in (spec, seed); the thread
/// count only affects speed.
inline RunReport run(const ExperimentSpec& spec) {
  spec.validate();
  const ExprPtr node = parse_expression(spec.expression);
  const FactoryPtr factory = build_factory(*node, spec.build);
  RunReport report;
  report.spec = spec;
  report.canonical = to_string(*node);
  for (std::size_t i = 0; i < spec.p_grid.size(); ++i) {
    const double p = spec.p_grid[i];
    Tally t = simulate(*factory, p, spec.replications, spec.seed, i, spec.threads);
    report.points.push_back(make_point_report(*node, spec, p, std::move(t)));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Joint stopping law

struct JointCell {
  std::size_t n = 0;
  std::uint64_t observed = 0;
  Bounds expected;  ///< Pr[N = n, Y = 0]
  double z = 0.0;
  bool passed = true;
};

struct JointLawResult {
  std::vector<JointCell> cells;
  stats::ChiSquareResult chi_square;
  bool passed = true;
};

/// Per-cell z-tests of the (N = n, Y = 0) frequencies against c_n (1-p)^n
/// for every n whose expected count reaches `min_expected`, plus cells with
/// zero probability (which must be empty), and a chi-square over the tested
/// cells with one remainder cell.
inline JointLawResult test_joint_law(const Tally& tally, const CoefficientSeries& c, double p,
                                     double z_gate = kDefaultZGate, double min_expected = 25.0,
                                     std::size_t max_cells = 1000) {
  JointLawResult result;
  const double reps = static_cast<double>(tally.reps);
  std::vector<std::uint64_t> observed;
  std::vector<double> probs;
  for (std::size_t n = 1; n <= max_cells; ++n) {
    const Bounds expected = joint_stop_zero_probability(c, n, p);
    const bool zero = expected.hi <= 0.0;
    // Pr[N >= n] = (1 - S_{n-1})(1-p)^(n-1) bounds every later cell.
    const double reachable = c.tail_bounds(n).hi * std::pow(1.0 - p, static_cast<double>(n - 1));
    if (reachable * reps < min_expected) break;
    if (!zero && expected.mid() * reps < min_expected) continue;
    JointCell cell;
    cell.n = n;
    cell.observed = n < tally.joint_zero.size() ? tally.joint_zero[n] : 0;
    cell.expected = expected;
    if (zero) {
      cell.z = cell.observed == 0 ? 0.0 : INFINITY;
    } else {
      cell.z = stats::proportion_z(cell.observed, tally.reps, expected);
      observed.push_back(cell.observed);
      probs.push_back(expected.mid());
    }
    cell.passed = std::abs(cell.z) < z_gate;
    result.passed = result.passed && cell.passed;
    result.cells.push_back(cell);
  }
  if (result.cells.empty()) throw Error("joint law: no cell reaches the minimum expected count");
  if (!observed.empty()) {
    result.chi_square = stats::chi_square_gof(observed, probs, tally.reps);
    result.passed = result.passed && result.chi_square.p_value >= kChiSquareSignificance;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Optimality sweep

struct SweepRow {
  std::string expression;
  double p = 0.0;
  Tally tally;
  Bounds optimal;  ///< f(p)/p
  double ratio = 0.0;
  stats::Range ratio_ci;
  double z = 0.0;
  bool passed = true;
};

struct SweepFit {
  std::string expression;
  double empirical_slope = 0.0;
  double reference_slope = 0.0;
  bool passed = true;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<SweepFit> fits;
  double slope_tolerance = 0.05;
  bool passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.passed; }) &&
           std::all_of(fits.begin(), fits.end(), [](const SweepFit& f) { return f.passed; });
  }
};

/// Empirical E[N] p / f(p) for the randomized factory over a grid, and the
/// log-log slope of E[N] against p compared with that of f(p)/p.
inline SweepReport sweep_optimality(const std::vector<std::string>& entries,
                                    const std::vector<double>& grid, std::uint64_t reps,
                                    std::uint64_t seed = kDefaultSeed, unsigned threads = 0,
                                    double confidence = kDefaultConfidence,
                                    double z_gate = kDefaultZGate, double slope_tolerance = 0.05) {
  SweepReport report;
  report.slope_tolerance = slope_tolerance;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const ExprPtr node = parse_expression(entries[e]);
    const SeriesPtr series = build_series(*node);
    const FactoryPtr factory = randomized_factory(series);
    std::vector<double> means, optima;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      SweepRow row;
      row.expression = to_string(*node);
      row.p = grid[i];
      row.tally = simulate(*factory, grid[i], reps, seed, (e << 20) + i, threads);
      row.optimal = expected_inputs_alg1(*series, grid[i]).bounds();
      const double mean = row.tally.mean_n();
      const double se = row.tally.se_n();
      row.ratio = mean / row.optimal.mid();
      const stats::Range ci = stats::mean_interval(mean, se, confidence);
      row.ratio_ci = {ci.lo / row.optimal.hi, ci.hi / row.optimal.lo};
      row.z = stats::z_distance(mean, row.optimal, se);
      row.passed = std::abs(row.z) < z_gate;
      means.push_back(mean);
      optima.push_back(row.optimal.mid());
      report.rows.push_back(std::move(row));
    }
    if (grid.size() >= 2) {
      SweepFit fit;
      fit.expression = to_string(*node);
      fit.empirical_slope = stats::loglog_fit(grid, means).slope;
      fit.reference_slope = stats::loglog_fit(grid, optima).slope;
      fit.passed = std::abs(fit.empirical_slope - fit.reference_slope) <= slope_tolerance;
      report.fits.push_back(fit);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// von Neumann extraction

struct FairBitReport {
  double p = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t ones = 0;
  std::uint64_t pair_sum = 0;
  unsigned __int128 pair_square_sum = 0;
  std::vector<std::uint64_t> pair_hist;  ///< index = pairs used

  double bit_mean() const { return static_cast<double>(ones) / reps; }
  double pairs_mean() const { return static_cast<double>(pair_sum) / reps; }
  double pairs_se() const {
    const long double m = static_cast<long double>(pair_sum) / reps;
    const long double sq = static_cast<long double>(pair_square_sum) / reps;
    const long double v = (sq - m * m) * reps / (reps - 1);
    return v > 0 ? std::sqrt(static_cast<double>(v) / reps) : 0.0;
  }
  /// Pairs used is Geometric(2p(1-p)) with mean 1/(2p(1-p)).
  double pairs_expected() const { return 1.0 / (2.0 * p * (1.0 - p)); }
};

inline FairBitReport fair_bit_experiment(double p, std::uint64_t reps,
                                         std::uint64_t seed = kDefaultSeed) {
  FairBitReport r;
  r.p = p;
  r.reps = reps;
  const std::uint64_t blocks = (reps + kBlockSize - 1) / kBlockSize;
  for (std::uint64_t b = 0; b < blocks; ++b) {
    SimulatedCoins coins(p, make_engine(seed, 0xF41B, b));
    const std::uint64_t count = std::min(kBlockSize, reps - b * kBlockSize);
    for (std::uint64_t i = 0; i < count; ++i) {
      const VonNeumannResult v = von_neumann_bit(coins);
      r.ones += v.bit ? 1 : 0;
      r.pair_sum += v.pairs_used;
      r.pair_square_sum += static_cast<unsigned __int128>(v.pairs_used) * v.pairs_used;
      Tally::bump(r.pair_hist, v.pairs_used);
    }
  }
  return r;
}

/// Chi-square of the pairs-used histogram against Geometric(2p(1-p)) on the
/// first `cells` values, with the rest pooled.
inline stats::ChiSquareResult fair_bit_geometric_fit(const FairBitReport& r, std::size_t cells = 10) {
  const double q = 2.0 * r.p * (1.0 - r.p);
  std::vector<std::uint64_t> observed;
  std::vector<double> probs;
  for (std::size_t k = 1; k <= cells; ++k) {
    observed.push_back(k < r.pair_hist.size() ? r.pair_hist[k] : 0);
    probs.push_back(q * std::pow(1.0 - q, static_cast<double>(k - 1)));
  }
  return stats::chi_square_gof(observed, probs, r.reps);
}

// ---------------------------------------------------------------------------
// Named sets

/// One representative expression per catalog entry.
inline const std::vector<std::string>& default_catalog_expressions() {
  static const std::vector<std::string> entries = {
      "power:a=1/3", "sqrt",    "mobius_sqrt",           "log2_sqrt",
      "exp_sqrt",    "entropy", "finite:[1/4,1/4,1/2]"};
  return entries;
}

/// n geometrically spaced points from start to stop inclusive.
inline std::vector<double> geometric_grid(double start, double stop, std::size_t points) {
  if (points == 0) throw DomainError("grid needs at least one point");
  if (!(start > 0 && stop > 0)) throw DomainError("geometric grid needs positive ends");
  std::vector<double> grid;
  if (points == 1) return {start};
  const double ratio = std::pow(stop / start, 1.0 / static_cast<double>(points - 1));
  for (std::size_t i = 0; i < points; ++i) {
    grid.push_back(i + 1 == points ? stop : start * std::pow(ratio, static_cast<double>(i)));
  }
  return grid;
}

}  // namespace bfactory
