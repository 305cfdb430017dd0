// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Report serialization (CSV and JSON), p-grid and key=value config parsing.

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bfactory/analysis.hpp"
#include "bfactory/errors.hpp"
#include "bfactory/harness.hpp"

namespace bfactory {

inline constexpr const char* kReportSchema = "bfactory.report/1";

/// Shortest round-trip text of a double; stable across runs.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", x);
  return buffer;
}

/// "0.1,0.5,0.9" or "geom:start,stop,points".
inline std::vector<double> parse_p_grid(const std::string& text) {
  auto number = [&](const std::string& token) {
    try {
      return to_double_nearest(parse_rational(token));
    } catch (const Error&) {
      throw DomainError("malformed p value '" + token + "' in '" + text + "'");
    }
  };
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      parts.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    }
    return parts;
  };
  std::vector<double> grid;
  if (text.rfind("geom:", 0) == 0) {
    const auto parts = split(text.substr(5));
    if (parts.size() != 3) throw DomainError("expected geom:start,stop,points");
    const double points = number(parts[2]);
    if (points < 1 || points != std::floor(points)) throw DomainError("points must be a positive integer");
    grid = geometric_grid(number(parts[0]), number(parts[1]), static_cast<std::size_t>(points));
  } else {
    for (const auto& token : split(text)) grid.push_back(number(token));
  }
  if (grid.empty()) throw DomainError("empty p grid");
  for (double p : grid) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("p values must lie in (0,1)");
  }
  return grid;
}

/// Key = value lines; '#' starts a comment; keys are case-sensitive.
inline std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line without '='", number);
    auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t\r");
      const auto last = s.find_last_not_of(" \t\r");
      return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config line with empty key", number);
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

inline std::map<std::string, std::string> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Run reports

inline void write_csv(const RunReport& report, std::ostream& out) {
  out << "expression,algorithm,p,reps,truncated,mean_y,y_ci_lo,y_ci_hi,f_lo,f_hi,"
         "mean_n,n_ci_lo,n_ci_hi,en_lo,en_hi,mean_uniforms,mean_pairs,max_n,z_y,z_n,passed\n";
  for (const auto& pt : report.points) {
    const Tally& t = pt.tally;
    auto gate = [&](const char* name) -> std::string {
      for (const auto& g : pt.gates) {
        if (g.name == name) return format_double(g.statistic);
      }
      return "";
    };
    const double reps = t.reps ? static_cast<double>(t.reps) : 1.0;
    out << '"' << report.canonical << "\"," << to_string(report.spec.build.algorithm) << ','
        << format_double(pt.p) << ',' << t.reps << ',' << t.truncated << ','
        << format_double(t.mean_y()) << ',' << format_double(pt.y_ci.lo) << ','
        << format_double(pt.y_ci.hi) << ',' << format_double(pt.reference.f.lo) << ','
        << format_double(pt.reference.f.hi) << ',' << format_double(t.mean_n()) << ','
        << format_double(pt.n_ci.lo) << ',' << format_double(pt.n_ci.hi) << ',';
    if (pt.reference.expected_n) {
      out << format_double(pt.reference.expected_n->lo) << ','
          << format_double(pt.reference.expected_n->hi) << ',';
    } else {
      out << ",,";
    }
    out << format_double(static_cast<double>(t.uniforms) / reps) << ','
        << format_double(static_cast<double>(t.pairs) / reps) << ',' << t.n_max << ','
        << gate("mean_y") << ',' << gate("mean_n") << ',' << (pt.passed() ? 1 : 0) << '\n';
  }
}

namespace detail {

inline nlohmann::ordered_json gates_json(const std::vector<Gate>& gates) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& g : gates) {
    list.push_back({{"name", g.name},
                    {"statistic", format_double(g.statistic)},
                    {"threshold", g.threshold},
                    {"passed", g.passed},
                    {"detail", g.detail}});
  }
  return list;
}

inline nlohmann::ordered_json bounds_json(const Bounds& b) { return {b.lo, b.hi}; }

}  // namespace detail

inline nlohmann::ordered_json to_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["expression"] = report.canonical;
  j["algorithm"] = to_string(report.spec.build.algorithm);
  j["replications"] = report.spec.replications;
  j["seed"] = report.spec.seed;
  j["confidence"] = report.spec.confidence;
  j["z_gate"] = report.spec.z_gate;
  j["digit_ceiling"] = report.spec.build.digit_ceiling;
  j["dyadic_shortcut"] = report.spec.build.dyadic_shortcut;
  j["cap"] = report.spec.build.cap;
  j["passed"] = report.passed();
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const auto& pt : report.points) {
    const Tally& t = pt.tally;
    nlohmann::ordered_json q;
    q["p"] = pt.p;
    q["reps"] = t.reps;
    q["truncated"] = t.truncated;
    q["mean_y"] = t.mean_y();
    q["y_ci"] = {pt.y_ci.lo, pt.y_ci.hi};
    q["mean_n"] = t.mean_n();
    q["n_ci"] = {pt.n_ci.lo, pt.n_ci.hi};
    q["max_n"] = t.n_max;
    q["uniforms"] = t.uniforms;
    q["pairs"] = t.pairs;
    q["reference"] = {{"f", detail::bounds_json(pt.reference.f)},
                      {"expected_n", pt.reference.expected_n
                                         ? detail::bounds_json(*pt.reference.expected_n)
                                         : nlohmann::ordered_json(nullptr)}};
    q["n_histogram"] = t.n_hist;
    q["outer_histogram"] = t.outer_hist;
    q["joint_y0_histogram"] = t.joint_zero;
    q["n_overflow"] = t.n_overflow;
    q["tail"] = t.tail_curve();
    q["gates"] = detail::gates_json(pt.gates);
    q["passed"] = pt.passed();
    points.push_back(std::move(q));
  }
  j["points"] = std::move(points);
  return j;
}

inline void write_json(const RunReport& report, std::ostream& out) {
  out << to_json(report).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Analysis tables

struct AnalysisRow {
  double p = 0.0;
  EvalResult f;
  EvalResult f_prime;
  EvalResult en_alg1;
  EvalResult en_alg2;
  std::optional<EvalResult> lower_bound;  ///< absent when f(p) is 0 or 1 to precision
};

inline std::vector<AnalysisRow> analyze(const CoefficientSeries& c, const std::vector<double>& grid,
                                        double tol = kDefaultTolerance) {
  std::vector<AnalysisRow> rows;
  for (double p : grid) {
    AnalysisRow r;
    r.p = p;
    r.f = eval_f(c, p, tol);
    r.f_prime = eval_f_prime(c, p, tol);
    r.en_alg1 = expected_inputs_alg1(c, p, tol);
    r.en_alg2 = expected_inputs_alg2(c, p, tol);
    try {
      r.lower_bound = cramer_rao_from(r.f.bounds(), r.f_prime.bounds(), p);
    } catch (const DomainError&) {
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_analysis_csv(const std::string& expression, const std::vector<AnalysisRow>& rows,
                               std::ostream& out) {
  out << "expression,p,f,f_err,f_prime,f_prime_err,en_alg1,en_alg1_err,en_alg2,en_alg2_err,"
         "lower_bound,lower_bound_err\n";
  for (const auto& r : rows) {
    out << '"' << expression << "\"," << format_double(r.p) << ',' << format_double(r.f.value)
        << ',' << format_double(r.f.error_bound) << ',' << format_double(r.f_prime.value) << ','
        << format_double(r.f_prime.error_bound) << ',' << format_double(r.en_alg1.value) << ','
        << format_double(r.en_alg1.error_bound) << ',' << format_double(r.en_alg2.value) << ','
        << format_double(r.en_alg2.error_bound) << ',';
    if (r.lower_bound) {
      out << format_double(r.lower_bound->value) << ',' << format_double(r.lower_bound->error_bound);
    } else {
      out << ',';
    }
    out << '\n';
  }
}

inline void write_analysis_json(const std::string& expression, const std::vector<AnalysisRow>& rows,
                                std::ostream& out) {
  auto eval = [](const EvalResult& e) {
    return nlohmann::ordered_json{
        {"value", e.value}, {"error_bound", e.error_bound}, {"terms", e.terms_used}};
  };
  nlohmann::ordered_json j;
  j["schema"] = "bfactory.analysis/1";
  j["expression"] = expression;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    list.push_back({{"p", r.p},
                    {"f", eval(r.f)},
                    {"f_prime", eval(r.f_prime)},
                    {"expected_n_alg1", eval(r.en_alg1)},
                    {"expected_n_alg2", eval(r.en_alg2)},
                    {"lower_bound", r.lower_bound ? eval(*r.lower_bound)
                                                  : nlohmann::ordered_json(nullptr)}});
  }
  j["rows"] = std::move(list);
  out << j.dump(2) << '\n';
}

}  // namespace bfactory
