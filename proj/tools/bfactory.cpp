// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// bfactory: command-line front end for the Bernoulli factory library.
//
// Exit codes: 0 all gates passed, 1 a statistical gate failed, 2 usage or
// expression error, 3 runtime failure (precision ceiling, I/O).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11/CLI11.hpp>

#include "bfactory/bfactory.hpp"

namespace {

using namespace bfactory;

constexpr int kExitPass = 0;
constexpr int kExitGateFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Options shared by the experiment subcommands. Each value is resolved as
/// flag, then config file, then (for the seed) BFACTORY_SEED, then default.
struct Common {
  std::string expression;
  std::string p_text;
  std::uint64_t reps = 100'000;
  std::uint64_t seed = kDefaultSeed;
  std::string algo = "rand";
  bool nonrandomized = false;
  std::string out;
  std::string format = "csv";
  unsigned digit_ceiling = kDefaultDigitCeiling;
  bool dyadic_shortcut = false;
  double confidence = kDefaultConfidence;
  double z_gate = kDefaultZGate;
  std::uint64_t cap = kDefaultBaselineCap;
  unsigned threads = 0;
  std::string config;

  std::map<std::string, CLI::Option*> flags;
};

void add_common(CLI::App& cmd, Common& c, bool experiment) {
  c.flags["expression"] = cmd.add_option("expression", c.expression, "factory or series expression");
  c.flags["p"] = cmd.add_option("--p", c.p_text, "comma list or geom:start,stop,points");
  c.flags["out"] = cmd.add_option("--out", c.out, "output path (default: stdout)");
  c.flags["format"] =
      cmd.add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  c.flags["config"] = cmd.add_option("--config", c.config, "key = value experiment file");
  if (!experiment) return;
  c.flags["reps"] = cmd.add_option("--reps", c.reps, "replications per p")->check(CLI::PositiveNumber);
  c.flags["seed"] = cmd.add_option("--seed", c.seed, "64-bit seed (env BFACTORY_SEED if absent)");
  c.flags["algo"] = cmd.add_option("--algo", c.algo, "rand, nonrand or baseline")
                        ->check(CLI::IsMember({"rand", "nonrand", "baseline"}));
  c.flags["nonrandomized"] = cmd.add_flag("--nonrandomized", c.nonrandomized, "same as --algo nonrand");
  c.flags["digit_ceiling"] =
      cmd.add_option("--digit-ceiling", c.digit_ceiling, "precision ceiling in bits")
          ->check(CLI::Range(64u, 1u << 20));
  c.flags["dyadic_shortcut"] =
      cmd.add_flag("--dyadic-shortcut", c.dyadic_shortcut, "skip fair bits in dyadic digit tails");
  c.flags["confidence"] = cmd.add_option("--confidence", c.confidence, "interval confidence level")
                              ->check(CLI::Range(0.5, 0.999999999));
  c.flags["z_gate"] = cmd.add_option("--z-gate", c.z_gate, "gate threshold in standard errors")
                          ->check(CLI::NonNegativeNumber);
  c.flags["cap"] = cmd.add_option("--cap", c.cap, "baseline length cap")->check(CLI::PositiveNumber);
  c.flags["threads"] = cmd.add_option("--threads", c.threads, "worker threads (0: all cores)");
}

bool given(const Common& c, const std::string& key) {
  auto it = c.flags.find(key);
  return it != c.flags.end() && it->second->count() > 0;
}

template <class T>
T convert(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !in.eof()) throw UsageError("config: bad value for '" + key + "': " + text);
  return value;
}

bool convert_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError("config: bad boolean for '" + key + "': " + text);
}

/// Applies config-file and environment values to options not set by flags.
void resolve(Common& c, bool experiment) {
  std::map<std::string, std::string> config;
  if (!c.config.empty()) config = load_config(c.config);
  static const std::vector<std::string> known = {
      "expression", "p",     "reps",    "seed",    "algo",          "confidence",
      "digit_ceiling", "dyadic_shortcut", "cap", "threads", "format", "out", "z_gate"};
  for (const auto& [key, value] : config) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError("config: unknown key '" + key + "'");
    }
  }
  auto from_config = [&](const std::string& key) -> std::optional<std::string> {
    if (given(c, key)) return std::nullopt;
    auto it = config.find(key);
    if (it == config.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = from_config("expression")) c.expression = *v;
  if (auto v = from_config("p")) c.p_text = *v;
  if (auto v = from_config("format")) c.format = *v;
  if (auto v = from_config("out")) c.out = *v;
  if (c.format != "csv" && c.format != "json") throw UsageError("format must be csv or json");
  if (!experiment) return;
  if (auto v = from_config("reps")) c.reps = convert<std::uint64_t>("reps", *v);
  if (auto v = from_config("algo")) c.algo = *v;
  if (auto v = from_config("confidence")) c.confidence = convert<double>("confidence", *v);
  if (auto v = from_config("digit_ceiling")) c.digit_ceiling = convert<unsigned>("digit_ceiling", *v);
  if (auto v = from_config("dyadic_shortcut")) c.dyadic_shortcut = convert_bool("dyadic_shortcut", *v);
  if (auto v = from_config("z_gate")) c.z_gate = convert<double>("z_gate", *v);
  if (auto v = from_config("cap")) c.cap = convert<std::uint64_t>("cap", *v);
  if (auto v = from_config("threads")) c.threads = convert<unsigned>("threads", *v);
  if (!given(c, "seed")) {
    if (auto it = config.find("seed"); it != config.end()) {
      c.seed = convert<std::uint64_t>("seed", it->second);
    } else if (const char* env = std::getenv("BFACTORY_SEED"); env != nullptr && *env != '\0') {
      c.seed = convert<std::uint64_t>("BFACTORY_SEED", env);
    }
  }
  if (c.nonrandomized) {
    if (given(c, "algo") && c.algo != "nonrand") {
      throw UsageError("--nonrandomized conflicts with --algo " + c.algo);
    }
    c.algo = "nonrand";
  }
  if (c.reps == 0) throw UsageError("reps must be positive");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw UsageError("confidence must lie in (0,1)");
}

/// Opens --out or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

ExperimentSpec make_spec(const Common& c, const std::string& default_grid) {
  if (c.expression.empty()) throw UsageError("an expression is required");
  ExperimentSpec spec;
  spec.expression = c.expression;
  spec.p_grid = parse_p_grid(c.p_text.empty() ? default_grid : c.p_text);
  spec.replications = c.reps;
  spec.seed = c.seed;
  spec.build.algorithm = parse_algorithm(c.algo);
  spec.build.digit_ceiling = c.digit_ceiling;
  spec.build.dyadic_shortcut = c.dyadic_shortcut;
  spec.build.cap = c.cap;
  spec.confidence = c.confidence;
  spec.z_gate = c.z_gate;
  spec.threads = c.threads;
  return spec;
}

void write_report(const RunReport& report, const Common& c) {
  Output out(c.out);
  if (c.format == "json") {
    write_json(report, out.stream());
  } else {
    write_csv(report, out.stream());
  }
}

/// Adds the joint-law test to every point of a randomized series run.
void add_joint_law_gates(RunReport& report) {
  const ExprPtr node = parse_expression(report.spec.expression);
  if (!node->is_series() || report.spec.build.algorithm != Algorithm::randomized) return;
  const SeriesPtr c = build_series(*node);
  for (auto& pt : report.points) {
    Gate g;
    g.name = "joint_law";
    g.threshold = report.spec.z_gate;
    try {
      const JointLawResult j = test_joint_law(pt.tally, *c, pt.p, report.spec.z_gate);
      double worst = 0;
      for (const auto& cell : j.cells) worst = std::max(worst, std::abs(cell.z));
      g.statistic = worst;
      g.passed = j.passed;
      g.detail = std::to_string(j.cells.size()) + " cells, chi2 p=" +
                 format_gate_value(j.chi_square.p_value);
    } catch (const Error& e) {
      g.detail = std::string("skipped: ") + e.what();
    }
    pt.gates.push_back(g);
  }
}

void print_gate_summary(const RunReport& report) {
  for (const auto& pt : report.points) {
    for (const auto& g : pt.gates) {
      std::cerr << (g.passed ? "PASS " : "FAIL ") << report.canonical << " p=" << format_gate_value(pt.p)
                << ' ' << g.name << " stat=" << format_gate_value(g.statistic);
      if (!g.detail.empty()) std::cerr << " (" << g.detail << ')';
      std::cerr << '\n';
    }
  }
}

int cmd_analyze(Common& c) {
  resolve(c, false);
  if (c.expression.empty()) throw UsageError("an expression is required");
  const ExprPtr node = parse_expression(c.expression);
  if (!node->is_series()) throw UsageError("analyze takes a series expression");
  const SeriesPtr series = build_series(*node);
  const auto grid = parse_p_grid(c.p_text.empty() ? "geom:0.05,0.95,19" : c.p_text);
  const auto rows = analyze(*series, grid);
  Output out(c.out);
  if (c.format == "json") {
    write_analysis_json(to_string(*node), rows, out.stream());
  } else {
    write_analysis_csv(to_string(*node), rows, out.stream());
  }
  return kExitPass;
}

int cmd_simulate(Common& c) {
  resolve(c, true);
  const RunReport report = run(make_spec(c, "0.5"));
  write_report(report, c);
  return kExitPass;
}

int cmd_verify(Common& c) {
  resolve(c, true);
  RunReport report = run(make_spec(c, "0.1,0.5,0.9"));
  add_joint_law_gates(report);
  write_report(report, c);
  print_gate_summary(report);
  return report.passed() ? kExitPass : kExitGateFailure;
}

int cmd_sweep(Common& c, std::vector<std::string> entries, double tolerance) {
  resolve(c, true);
  if (!c.expression.empty()) entries.insert(entries.begin(), c.expression);
  if (entries.empty()) entries = {"power:a=0.3", "power:a=0.5", "power:a=0.7"};
  const auto grid = parse_p_grid(c.p_text.empty() ? "geom:0.25,0.0009765625,9" : c.p_text);
  const SweepReport report =
      sweep_optimality(entries, grid, c.reps, c.seed, c.threads, c.confidence, c.z_gate, tolerance);
  Output out(c.out);
  if (c.format == "json") {
    nlohmann::ordered_json j;
    j["schema"] = "bfactory.sweep/1";
    j["replications"] = c.reps;
    j["seed"] = c.seed;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"expression", r.expression},
                      {"p", r.p},
                      {"mean_n", r.tally.mean_n()},
                      {"optimal", {r.optimal.lo, r.optimal.hi}},
                      {"ratio", r.ratio},
                      {"ratio_ci", {r.ratio_ci.lo, r.ratio_ci.hi}},
                      {"z", format_double(r.z)},
                      {"passed", r.passed}});
    }
    nlohmann::ordered_json fits = nlohmann::ordered_json::array();
    for (const auto& f : report.fits) {
      fits.push_back({{"expression", f.expression},
                      {"empirical_slope", f.empirical_slope},
                      {"reference_slope", f.reference_slope},
                      {"passed", f.passed}});
    }
    j["rows"] = std::move(rows);
    j["fits"] = std::move(fits);
    j["passed"] = report.passed();
    out.stream() << j.dump(2) << '\n';
  } else {
    out.stream() << "expression,p,reps,mean_n,optimal,ratio,ratio_ci_lo,ratio_ci_hi,z,passed\n";
    for (const auto& r : report.rows) {
      out.stream() << '"' << r.expression << "\"," << format_double(r.p) << ',' << r.tally.reps << ','
                   << format_double(r.tally.mean_n()) << ',' << format_double(r.optimal.mid()) << ','
                   << format_double(r.ratio) << ',' << format_double(r.ratio_ci.lo) << ','
                   << format_double(r.ratio_ci.hi) << ',' << format_double(r.z) << ','
                   << (r.passed ? 1 : 0) << '\n';
    }
  }
  for (const auto& f : report.fits) {
    std::cerr << (f.passed ? "PASS " : "FAIL ") << f.expression << " slope "
              << format_gate_value(f.empirical_slope) << " vs " << format_gate_value(f.reference_slope)
              << '\n';
  }
  return report.passed() ? kExitPass : kExitGateFailure;
}

int cmd_selftest(std::uint64_t reps, std::optional<std::uint64_t> seed, unsigned threads) {
  SelftestOptions options;
  options.replications = reps;
  options.threads = threads;
  if (seed) {
    options.seed = *seed;
  } else if (const char* env = std::getenv("BFACTORY_SEED"); env != nullptr && *env != '\0') {
    options.seed = convert<std::uint64_t>("BFACTORY_SEED", env);
  }
  bool ok = true;
  for (const auto& g : run_selftest(options)) {
    std::cout << (g.passed ? "PASS " : "FAIL ") << g.name;
    if (!g.detail.empty()) std::cout << " (" << g.detail << ')';
    std::cout << '\n';
    ok = ok && g.passed;
  }
  return ok ? kExitPass : kExitGateFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact Bernoulli factory sampler and verification harness", "bfactory"};
  app.require_subcommand(1);

  Common analyze_opts, simulate_opts, verify_opts, sweep_opts;
  auto* analyze_cmd = app.add_subcommand("analyze", "tabulate f, f', E[N] and the lower bound over p");
  add_common(*analyze_cmd, analyze_opts, false);
  auto* simulate_cmd = app.add_subcommand("simulate", "run replications and report estimates");
  add_common(*simulate_cmd, simulate_opts, true);
  auto* verify_cmd = app.add_subcommand("verify", "run replications and apply statistical gates");
  add_common(*verify_cmd, verify_opts, true);
  auto* sweep_cmd = app.add_subcommand("sweep", "E[N] p / f(p) over a p grid with log-log slopes");
  add_common(*sweep_cmd, sweep_opts, true);
  std::vector<std::string> sweep_entries;
  double slope_tolerance = 0.05;
  sweep_cmd->add_option("--entry", sweep_entries, "additional series expressions");
  sweep_cmd->add_option("--slope-tolerance", slope_tolerance, "allowed slope deviation");
  auto* selftest_cmd = app.add_subcommand("selftest", "reduced-size invariant checks of all modules");
  std::uint64_t selftest_reps = 10'000;
  std::optional<std::uint64_t> selftest_seed;
  unsigned selftest_threads = 0;
  selftest_cmd->add_option("--reps", selftest_reps, "replications per check")->check(CLI::PositiveNumber);
  selftest_cmd->add_option("--seed", selftest_seed, "64-bit seed");
  selftest_cmd->add_option("--threads", selftest_threads, "worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(analyze_opts);
    if (*simulate_cmd) return cmd_simulate(simulate_opts);
    if (*verify_cmd) return cmd_verify(verify_opts);
    if (*sweep_cmd) return cmd_sweep(sweep_opts, sweep_entries, slope_tolerance);
    if (*selftest_cmd) return cmd_selftest(selftest_reps, selftest_seed, selftest_threads);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "expression error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
