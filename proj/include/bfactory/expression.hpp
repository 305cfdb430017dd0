// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Text syntax shared by the command line, config files and reports:
//
//   factory := "complement(" factory ")" | "flip_input(" factory ")"
//            | "scale(" factory "," ["alpha="] number ")"
//            | "prod(" factory "," factory ")"
//            | "baseline(" series ["," "cap=" integer] ")" | series
//   series  := "power:a=" number | "sqrt" | "mobius_sqrt" | "log2_sqrt"
//            | "exp_sqrt" | "entropy" | "finite:[" number {"," number} "]"
//            | "compose(" series "," series "," ["order="] integer ")"
//            | "pc(" series "," series ")"
//            | "convex(" series "," series "," ["alpha="] number ")"
//   number  := integer ["/" integer] | decimal [("e"|"E") ["+"|"-"] integer]
//
// Whitespace between tokens is ignored. Printing a parsed tree gives the
// canonical form, which parses back to the same tree.

#pragma once

#include <cctype>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bfactory/analysis.hpp"
#include "bfactory/errors.hpp"
#include "bfactory/factory.hpp"
#include "bfactory/nonrand.hpp"
#include "bfactory/numeric.hpp"
#include "bfactory/series.hpp"

namespace bfactory {

enum class NodeKind {
  catalog,  ///< named catalog entry, including finite lists
  compose,
  product_complement,
  convex,
  complement,
  flip_input,
  scale,
  product,
  baseline,
};

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  NodeKind kind = NodeKind::catalog;
  std::string name;             ///< catalog entry name
  std::vector<Rational> values;  ///< catalog parameters or finite list
  Rational alpha;               ///< convex / scale weight
  std::size_t order = 0;        ///< compose truncation order
  std::optional<std::uint64_t> cap;  ///< baseline cap when given
  std::vector<ExprPtr> children;

  /// True for nodes that denote a coefficient series (and therefore also a
  /// factory through the selected algorithm).
  bool is_series() const {
    return kind == NodeKind::catalog || kind == NodeKind::compose ||
           kind == NodeKind::product_complement || kind == NodeKind::convex;
  }
};

namespace detail {

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) : text_(text) {}

  ExprPtr parse() {
    skip_space();
    if (pos_ == text_.size()) throw ParseError("empty expression", pos_);
    ExprPtr root = factory();
    skip_space();
    if (pos_ != text_.size()) throw ParseError("unexpected trailing input", pos_);
    return root;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  std::string identifier() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) throw ParseError("expected a name", pos_);
    return std::string(text_.substr(start, pos_ - start));
  }

  /// Optional "key=" prefix; returns false and leaves the position unchanged
  /// when the upcoming token is not that key.
  bool accept_key(std::string_view key) {
    skip_space();
    const std::size_t save = pos_;
    if (text_.substr(pos_, key.size()) == key) {
      pos_ += key.size();
      if (accept('=')) return true;
    }
    pos_ = save;
    return false;
  }

  void require_key(std::string_view key) {
    if (!accept_key(key)) throw ParseError("expected '" + std::string(key) + "='", pos_);
  }

  Rational number() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      const bool sign_after_exp =
          (c == '+' || c == '-') && pos_ > start && (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E');
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '/' || c == 'e' ||
          c == 'E' || sign_after_exp || ((c == '+' || c == '-') && pos_ == start)) {
        ++pos_;
      } else {
        break;
      }
    }
    if (start == pos_) throw ParseError("expected a number", pos_);
    try {
      return parse_rational(text_.substr(start, pos_ - start));
    } catch (const DomainError& e) {
      throw ParseError(e.what(), start);
    }
  }

  std::uint64_t integer() {
    const std::size_t start = pos_;
    const Rational r = number();
    if (r.get_den() != 1 || r < 0 || !r.get_num().fits_ulong_p()) {
      throw ParseError("expected a non-negative integer", start);
    }
    return r.get_num().get_ui();
  }

  ExprPtr factory() {
    skip_space();
    const std::size_t start = pos_;
    const std::string name = identifier();
    auto node = std::make_shared<ExprNode>();
    if (name == "complement" || name == "flip_input") {
      node->kind = name == "complement" ? NodeKind::complement : NodeKind::flip_input;
      expect('(');
      node->children.push_back(factory());
      expect(')');
      return node;
    }
    if (name == "scale") {
      node->kind = NodeKind::scale;
      expect('(');
      node->children.push_back(factory());
      expect(',');
      accept_key("alpha");
      const std::size_t at = pos_;
      node->alpha = number();
      if (node->alpha <= 0 || node->alpha > 1) {
        throw ParseError("scale alpha must lie in (0,1]", at);
      }
      expect(')');
      return node;
    }
    if (name == "prod") {
      node->kind = NodeKind::product;
      expect('(');
      node->children.push_back(factory());
      expect(',');
      node->children.push_back(factory());
      expect(')');
      return node;
    }
    if (name == "baseline") {
      node->kind = NodeKind::baseline;
      expect('(');
      node->children.push_back(series());
      if (accept(',')) {
        require_key("cap");
        const std::size_t at = pos_;
        node->cap = integer();
        if (*node->cap == 0) throw ParseError("baseline cap must be positive", at);
      }
      expect(')');
      return node;
    }
    pos_ = start;
    return series();
  }

  ExprPtr series() {
    skip_space();
    const std::size_t start = pos_;
    const std::string name = identifier();
    auto node = std::make_shared<ExprNode>();
    if (name == "compose") {
      node->kind = NodeKind::compose;
      expect('(');
      node->children.push_back(series());
      expect(',');
      node->children.push_back(series());
      expect(',');
      accept_key("order");
      const std::size_t at = pos_;
      node->order = integer();
      if (node->order == 0) throw ParseError("compose order must be at least 1", at);
      expect(')');
      return node;
    }
    if (name == "pc") {
      node->kind = NodeKind::product_complement;
      expect('(');
      node->children.push_back(series());
      expect(',');
      node->children.push_back(series());
      expect(')');
      return node;
    }
    if (name == "convex") {
      node->kind = NodeKind::convex;
      expect('(');
      node->children.push_back(series());
      expect(',');
      node->children.push_back(series());
      expect(',');
      accept_key("alpha");
      const std::size_t at = pos_;
      node->alpha = number();
      if (node->alpha <= 0 || node->alpha >= 1) {
        throw ParseError("convex alpha must lie in (0,1)", at);
      }
      expect(')');
      return node;
    }
    node->kind = NodeKind::catalog;
    node->name = name;
    if (name == "power") {
      expect(':');
      require_key("a");
      const std::size_t at = pos_;
      node->values.push_back(number());
      if (node->values[0] <= 0 || node->values[0] >= 1) {
        throw ParseError("power exponent must lie in (0,1)", at);
      }
      return node;
    }
    if (name == "finite") {
      expect(':');
      expect('[');
      const std::size_t at = pos_;
      if (!accept(']')) {
        do {
          node->values.push_back(number());
        } while (accept(','));
        expect(']');
      }
      try {
        finite_series(node->values);
      } catch (const Error& e) {
        throw ParseError(e.what(), at);
      }
      return node;
    }
    for (const char* known : {"sqrt", "mobius_sqrt", "log2_sqrt", "exp_sqrt", "entropy"}) {
      if (name == known) return node;
    }
    throw ParseError("unknown name '" + name + "'", start);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses a factory or series expression. Throws ParseError with the
/// offending position.
inline ExprPtr parse_expression(std::string_view text) {
  return detail::ExpressionParser(text).parse();
}

/// Canonical text of a tree.
inline std::string to_string(const ExprNode& node) {
  auto child = [&](std::size_t i) { return to_string(*node.children.at(i)); };
  switch (node.kind) {
    case NodeKind::catalog:
      if (node.name == "power") return "power:a=" + to_string(node.values.at(0));
      if (node.name == "finite") {
        std::string out = "finite:[";
        for (std::size_t i = 0; i < node.values.size(); ++i) {
          if (i > 0) out += ",";
          out += to_string(node.values[i]);
        }
        return out + "]";
      }
      return node.name;
    case NodeKind::compose:
      return "compose(" + child(0) + "," + child(1) + ",order=" + std::to_string(node.order) + ")";
    case NodeKind::product_complement:
      return "pc(" + child(0) + "," + child(1) + ")";
    case NodeKind::convex:
      return "convex(" + child(0) + "," + child(1) + ",alpha=" + to_string(node.alpha) + ")";
    case NodeKind::complement:
      return "complement(" + child(0) + ")";
    case NodeKind::flip_input:
      return "flip_input(" + child(0) + ")";
    case NodeKind::scale:
      return "scale(" + child(0) + ",alpha=" + to_string(node.alpha) + ")";
    case NodeKind::product:
      return "prod(" + child(0) + "," + child(1) + ")";
    case NodeKind::baseline: {
      std::string out = "baseline(" + child(0);
      if (node.cap) out += ",cap=" + std::to_string(*node.cap);
      return out + ")";
    }
  }
  return {};
}

/// Coefficient series of a series node.
inline SeriesPtr build_series(const ExprNode& node) {
  switch (node.kind) {
    case NodeKind::catalog:
      return catalog(node.name, node.values);
    case NodeKind::compose:
      return compose(build_series(*node.children[0]), build_series(*node.children[1]), node.order);
    case NodeKind::product_complement:
      return product_complement(build_series(*node.children[0]),
                                build_series(*node.children[1]));
    case NodeKind::convex:
      return convex_combination(build_series(*node.children[0]),
                                build_series(*node.children[1]), node.alpha);
    default:
      throw DomainError("'" + to_string(node) + "' is a factory, not a series");
  }
}

enum class Algorithm { randomized, nonrandomized, baseline };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::randomized: return "rand";
    case Algorithm::nonrandomized: return "nonrand";
    case Algorithm::baseline: return "baseline";
  }
  return {};
}

inline Algorithm parse_algorithm(std::string_view text) {
  if (text == "rand" || text == "randomized") return Algorithm::randomized;
  if (text == "nonrand" || text == "nonrandomized") return Algorithm::nonrandomized;
  if (text == "baseline") return Algorithm::baseline;
  throw DomainError("unknown algorithm '" + std::string(text) + "'");
}

struct BuildOptions {
  /// Sampler used for series leaves; explicit baseline(...) nodes always use
  /// the two-phase baseline.
  Algorithm algorithm = Algorithm::randomized;
  unsigned digit_ceiling = kDefaultDigitCeiling;
  bool dyadic_shortcut = false;
  std::uint64_t cap = kDefaultBaselineCap;
};

/// Factory for any node; series nodes are sampled with options.algorithm.
inline FactoryPtr build_factory(const ExprNode& node, const BuildOptions& options = {}) {
  SamplerOptions sampler;
  sampler.precision_ceiling = options.digit_ceiling;
  if (node.is_series()) {
    StoppingPtr d = stopping_from_coefficients(build_series(node));
    switch (options.algorithm) {
      case Algorithm::randomized:
        return randomized_factory(std::move(d), sampler);
      case Algorithm::nonrandomized:
        return nonrandomized_factory(std::move(d), {options.dyadic_shortcut, false},
                                     options.digit_ceiling);
      case Algorithm::baseline:
        return baseline_factory(std::move(d), options.cap, sampler);
    }
  }
  auto sub = [&](std::size_t i) { return build_factory(*node.children.at(i), options); };
  switch (node.kind) {
    case NodeKind::complement:
      return transform_output_complement(sub(0));
    case NodeKind::flip_input:
      return transform_input_complement(sub(0));
    case NodeKind::scale:
      if (options.algorithm == Algorithm::nonrandomized) {
        return transform_scale(sub(0), std::make_shared<DigitConstantCoin>(
                                           node.alpha, options.dyadic_shortcut));
      }
      return transform_scale(sub(0), node.alpha);
    case NodeKind::product:
      return transform_product(sub(0), sub(1));
    case NodeKind::baseline:
      return baseline_factory(stopping_from_coefficients(build_series(*node.children[0])),
                              node.cap.value_or(options.cap), sampler);
    default:
      break;
  }
  throw Error("unhandled expression node");
}

inline FactoryPtr build_factory(std::string_view text, const BuildOptions& options = {}) {
  return build_factory(*parse_expression(text), options);
}

/// Exact law of a factory at p: Pr[Y = 1] and, where a closed form exists,
/// E[N] as certified enclosures.
struct ReferenceLaw {
  Bounds f;
  std::optional<Bounds> expected_n;
};

/// Expected coin inputs spent on a digit-based Bernoulli(alpha) draw.
inline Bounds digit_coin_cost(const Rational& alpha, double p, bool shortcut) {
  if (alpha == 1) return Bounds::point(0.0);
  double fair_bits = 2.0;
  if (shortcut) {
    if (auto tail = constant_tail_of(alpha, DyadicConvention::terminate_with_zeros)) {
      fair_bits = 2.0 * (1.0 - std::ldexp(1.0, -static_cast<int>(tail->from_position - 1)));
    }
  }
  const Bounds pq = Bounds::point(p) * (Bounds::point(1.0) - Bounds::point(p));
  return Bounds::point(fair_bits) / pq;
}

inline ReferenceLaw reference_law(const ExprNode& node, double p, const BuildOptions& options = {},
                                  double tol = kDefaultTolerance) {
  detail::check_probability(p);
  ReferenceLaw law;
  if (node.is_series() || node.kind == NodeKind::baseline) {
    const bool baseline = node.kind == NodeKind::baseline || options.algorithm == Algorithm::baseline;
    const SeriesPtr c = build_series(node.kind == NodeKind::baseline ? *node.children[0] : node);
    law.f = eval_f(*c, p, tol).bounds();
    if (!baseline) {
      if (options.algorithm == Algorithm::randomized) {
        law.expected_n = expected_inputs_alg1(*c, p, tol).bounds();
      } else if (!options.dyadic_shortcut) {
        law.expected_n = expected_inputs_alg2(*c, p, tol).bounds();
      }
    }
    return law;
  }
  const ReferenceLaw first = reference_law(*node.children.at(0),
                                           node.kind == NodeKind::flip_input ? 1.0 - p : p,
                                           options, tol);
  switch (node.kind) {
    case NodeKind::complement:
      law.f = (Bounds::point(1.0) - first.f).clamped(0.0, 1.0);
      law.expected_n = first.expected_n;
      break;
    case NodeKind::flip_input:
      law = first;
      break;
    case NodeKind::scale: {
      const Bounds alpha = Bounds::of(node.alpha);
      law.f = alpha * first.f;
      if (first.expected_n) {
        Bounds cost = Bounds::point(0.0);
        if (options.algorithm == Algorithm::nonrandomized) {
          cost = digit_coin_cost(node.alpha, p, options.dyadic_shortcut);
        }
        law.expected_n = cost + alpha * *first.expected_n;
      }
      break;
    }
    case NodeKind::product: {
      const ReferenceLaw second = reference_law(*node.children.at(1), p, options, tol);
      law.f = first.f * second.f;
      if (first.expected_n && second.expected_n) {
        law.expected_n = *first.expected_n + first.f * *second.expected_n;
      }
      break;
    }
    default:
      throw Error("unhandled expression node");
  }
  return law;
}

}  // namespace bfactory
