/* Copyright 2026 The compnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Compositional target functions: constituent scalar functions wired into a
// directed acyclic graph with a single sink, plus dataset sampling.

#ifndef COMPNET_COMPFN_HPP_
#define COMPNET_COMPFN_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "compnet/error.hpp"
#include "compnet/format.hpp"
#include "compnet/rng.hpp"

namespace compnet {

// ---------------------------------------------------------------------------
// Constituent functions
// ---------------------------------------------------------------------------

/// a * cos(b * pi * (x + y))
struct CosSum {
  double a = 1.0, b = 1.0;
  bool operator==(const CosSum&) const = default;
};
/// a * (x + y)^2 + c
struct QuadSum {
  double a = 1.0, c = 0.0;
  bool operator==(const QuadSum&) const = default;
};
/// a * (w1 x + w2 y)^2
struct AffineQuad {
  double a = 1.0, w1 = 1.0, w2 = 1.0;
  bool operator==(const AffineQuad&) const = default;
};
/// a * (w1 x + w2 y)^3
struct CubicAffine {
  double a = 1.0, w1 = 1.0, w2 = 1.0;
  bool operator==(const CubicAffine&) const = default;
};
/// a * sqrt(max(0, w1 x + c)); ignores its second argument.
struct SqrtAffine {
  double a = 1.0, w1 = 1.0, c = 0.0;
  bool operator==(const SqrtAffine&) const = default;
};
struct RampUnit {
  double w1 = 0.0, w2 = 0.0, bias = 0.0, coeff = 0.0;
  bool operator==(const RampUnit&) const = default;
};
/// sum_i coeff_i * (w1_i x + w2_i y + bias_i)_+
struct ReluCombo {
  std::vector<RampUnit> units;
  bool operator==(const ReluCombo&) const = default;
};
/// |x^2 - y^2|
struct AbsDiffSq {
  bool operator==(const AbsDiffSq&) const = default;
};
/// x * y
struct Product {
  bool operator==(const Product&) const = default;
};
/// xx x^2 + xy x y + yy y^2 + x x + y y + c
struct Quadratic {
  double xx = 0.0, xy = 0.0, yy = 0.0, x = 0.0, y = 0.0, c = 0.0;
  bool operator==(const Quadratic&) const = default;
};
/// Unary x -> x.
struct Identity {
  bool operator==(const Identity&) const = default;
};
/// Unary x -> |x|.
struct AbsValue {
  bool operator==(const AbsValue&) const = default;
};

using ConstituentFn = std::variant<CosSum, QuadSum, AffineQuad, CubicAffine, SqrtAffine, ReluCombo,
                                   AbsDiffSq, Product, Quadratic, Identity, AbsValue>;

inline int arity(const ConstituentFn& fn) {
  return std::holds_alternative<Identity>(fn) || std::holds_alternative<AbsValue>(fn) ? 1 : 2;
}

/// Evaluates a constituent function. Unary functions ignore `y`.
inline double apply(const ConstituentFn& fn, double x, double y = 0.0) {
  return std::visit(
      [x, y](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, CosSum>) {
          return f.a * std::cos(f.b * std::numbers::pi * (x + y));
        } else if constexpr (std::is_same_v<T, QuadSum>) {
          const double s = x + y;
          return f.a * s * s + f.c;
        } else if constexpr (std::is_same_v<T, AffineQuad>) {
          const double s = f.w1 * x + f.w2 * y;
          return f.a * s * s;
        } else if constexpr (std::is_same_v<T, CubicAffine>) {
          const double s = f.w1 * x + f.w2 * y;
          return f.a * s * s * s;
        } else if constexpr (std::is_same_v<T, SqrtAffine>) {
          return f.a * std::sqrt(std::max(0.0, f.w1 * x + f.c));
        } else if constexpr (std::is_same_v<T, ReluCombo>) {
          double sum = 0.0;
          for (const auto& u : f.units) sum += u.coeff * std::max(0.0, u.w1 * x + u.w2 * y + u.bias);
          return sum;
        } else if constexpr (std::is_same_v<T, AbsDiffSq>) {
          return std::abs(x * x - y * y);
        } else if constexpr (std::is_same_v<T, Product>) {
          return x * y;
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return f.xx * x * x + f.xy * x * y + f.yy * y * y + f.x * x + f.y * y + f.c;
        } else if constexpr (std::is_same_v<T, Identity>) {
          return x;
        } else {
          static_assert(std::is_same_v<T, AbsValue>);
          return std::abs(x);
        }
      },
      fn);
}

inline std::vector<double> coefficients(const ConstituentFn& fn) {
  return std::visit(
      [](const auto& f) -> std::vector<double> {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, CosSum>) return {f.a, f.b};
        else if constexpr (std::is_same_v<T, QuadSum>) return {f.a, f.c};
        else if constexpr (std::is_same_v<T, AffineQuad> || std::is_same_v<T, CubicAffine>)
          return {f.a, f.w1, f.w2};
        else if constexpr (std::is_same_v<T, SqrtAffine>) return {f.a, f.w1, f.c};
        else if constexpr (std::is_same_v<T, Quadratic>) return {f.xx, f.xy, f.yy, f.x, f.y, f.c};
        else if constexpr (std::is_same_v<T, ReluCombo>) {
          std::vector<double> out;
          for (const auto& u : f.units) out.insert(out.end(), {u.w1, u.w2, u.bias, u.coeff});
          return out;
        } else {
          return {};
        }
      },
      fn);
}

inline const char* fn_name(const ConstituentFn& fn) {
  static constexpr const char* kNames[] = {"cos_sum", "quad_sum",  "affine_quad", "cubic_affine",
                                           "sqrt_affine", "relu_combo", "abs_diff_sq", "product",
                                           "quadratic", "identity", "abs"};
  return kNames[fn.index()];
}

inline void validate(const ConstituentFn& fn) {
  for (double c : coefficients(fn)) {
    if (!std::isfinite(c)) {
      throw ValidationError(std::string("non-finite coefficient in ") + fn_name(fn));
    }
  }
  if (const auto* combo = std::get_if<ReluCombo>(&fn); combo && combo->units.empty()) {
    throw ValidationError("relu_combo needs at least one unit");
  }
}

/// Text form, e.g. "cos_sum(0.59, 1.5)". Round-trips through parse_fn.
inline std::string to_string(const ConstituentFn& fn) {
  std::string out = fn_name(fn);
  const auto coeffs = coefficients(fn);
  if (coeffs.empty()) return out;
  out += '(';
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (i) out += ", ";
    out += format_short(coeffs[i]);
  }
  out += ')';
  return out;
}

inline ConstituentFn parse_fn(std::string_view text) {
  const std::string body = trim(text);
  const auto open = body.find('(');
  const std::string name = trim(body.substr(0, open));
  std::vector<double> args;
  if (open != std::string::npos) {
    const auto close = body.rfind(')');
    if (close == std::string::npos || close < open) {
      throw ValidationError("unbalanced parentheses in function '" + body + "'");
    }
    const std::string inner = trim(body.substr(open + 1, close - open - 1));
    if (!inner.empty()) {
      for (const auto& part : split(inner, ',')) {
        const std::string token = trim(part);
        std::size_t used = 0;
        double value = 0.0;
        try {
          value = std::stod(token, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != token.size() || token.empty()) {
          throw ValidationError("bad number '" + token + "' in function '" + body + "'");
        }
        args.push_back(value);
      }
    }
  }
  auto need = [&](std::size_t count) {
    if (args.size() != count) {
      throw ValidationError(name + " expects " + std::to_string(count) + " coefficients, got " +
                            std::to_string(args.size()));
    }
  };
  ConstituentFn fn;
  if (name == "cos_sum") {
    need(2);
    fn = CosSum{args[0], args[1]};
  } else if (name == "quad_sum") {
    need(2);
    fn = QuadSum{args[0], args[1]};
  } else if (name == "affine_quad") {
    need(3);
    fn = AffineQuad{args[0], args[1], args[2]};
  } else if (name == "cubic_affine") {
    need(3);
    fn = CubicAffine{args[0], args[1], args[2]};
  } else if (name == "sqrt_affine") {
    need(3);
    fn = SqrtAffine{args[0], args[1], args[2]};
  } else if (name == "relu_combo") {
    if (args.empty() || args.size() % 4 != 0) {
      throw ValidationError("relu_combo expects groups of 4 coefficients (w1, w2, bias, coeff)");
    }
    ReluCombo combo;
    for (std::size_t i = 0; i < args.size(); i += 4) {
      combo.units.push_back({args[i], args[i + 1], args[i + 2], args[i + 3]});
    }
    fn = std::move(combo);
  } else if (name == "abs_diff_sq") {
    need(0);
    fn = AbsDiffSq{};
  } else if (name == "product") {
    need(0);
    fn = Product{};
  } else if (name == "quadratic") {
    need(6);
    fn = Quadratic{args[0], args[1], args[2], args[3], args[4], args[5]};
  } else if (name == "identity") {
    need(0);
    fn = Identity{};
  } else if (name == "abs") {
    need(0);
    fn = AbsValue{};
  } else {
    throw ValidationError("unknown constituent function '" + name + "'");
  }
  validate(fn);
  return fn;
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

/// An in-edge: either an input coordinate or the output of another node.
struct Source {
  enum class Kind { kInput, kNode };
  Kind kind = Kind::kInput;
  int index = 0;  // input coordinate, or node id

  static Source input(int i) { return {Kind::kInput, i}; }
  static Source node(int id) { return {Kind::kNode, id}; }
  bool operator==(const Source&) const = default;
};

struct NodeSpec {
  int id = 0;
  std::vector<Source> in_edges;
  ConstituentFn fn;
};

class FunctionGraph;
FunctionGraph build_dag(std::vector<NodeSpec> spec, int n_inputs);

/// Validated DAG of constituent functions with exactly one sink.
///
/// Nodes are stored in topological order; `Source::kNode` edges inside the
/// stored nodes refer to positions in that order, not to the caller's ids.
class FunctionGraph {
 public:
  int n_inputs() const { return n_inputs_; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  std::size_t sink() const { return nodes_.size() - 1; }

  /// Value of every node, in topological order.
  void evaluate_nodes(std::span<const double> x, std::vector<double>& values) const {
    values.resize(nodes_.size());
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
      const auto& node = nodes_[v];
      double args[2] = {0.0, 0.0};
      for (std::size_t e = 0; e < node.in_edges.size(); ++e) {
        const auto& src = node.in_edges[e];
        args[e] = src.kind == Source::Kind::kInput ? x[src.index] : values[src.index];
      }
      values[v] = apply(node.fn, args[0], args[1]);
    }
  }

  double evaluate(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_inputs_) {
      throw ValidationError("evaluate: expected " + std::to_string(n_inputs_) + " inputs, got " +
                            std::to_string(x.size()));
    }
    std::vector<double> values;
    evaluate_nodes(x, values);
    return values.back();
  }

  double operator()(std::span<const double> x) const { return evaluate(x); }

 private:
  friend FunctionGraph build_dag(std::vector<NodeSpec> spec, int n_inputs);
  int n_inputs_ = 0;
  std::vector<NodeSpec> nodes_;
};

inline double evaluate(const FunctionGraph& graph, std::span<const double> x) {
  return graph.evaluate(x);
}

/// Validates `spec` and returns the graph in topological order.
/// Rejects cycles, dangling references, arity mismatches, unused inputs
/// and anything other than exactly one sink.
inline FunctionGraph build_dag(std::vector<NodeSpec> spec, int n_inputs) {
  if (n_inputs < 1) throw ValidationError("graph needs at least one input");
  if (spec.empty()) throw ValidationError("graph needs at least one node");
  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (!position.emplace(spec[i].id, i).second) {
      throw ValidationError("duplicate node id " + std::to_string(spec[i].id));
    }
  }
  std::vector<bool> input_used(n_inputs, false);
  std::vector<int> indegree(spec.size(), 0);
  std::vector<std::vector<std::size_t>> consumers(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& node = spec[i];
    validate(node.fn);
    if (static_cast<int>(node.in_edges.size()) != arity(node.fn)) {
      throw ValidationError("node " + std::to_string(node.id) + ": " + fn_name(node.fn) +
                            " has arity " + std::to_string(arity(node.fn)) + " but " +
                            std::to_string(node.in_edges.size()) + " in-edges");
    }
    for (const auto& src : node.in_edges) {
      if (src.kind == Source::Kind::kInput) {
        if (src.index < 0 || src.index >= n_inputs) {
          throw ValidationError("node " + std::to_string(node.id) + " reads input x" +
                                std::to_string(src.index) + " outside [0, " +
                                std::to_string(n_inputs) + ")");
        }
        input_used[src.index] = true;
      } else {
        const auto it = position.find(src.index);
        if (it == position.end()) {
          throw ValidationError("node " + std::to_string(node.id) + " references missing node " +
                                std::to_string(src.index));
        }
        ++indegree[i];
        consumers[it->second].push_back(i);
      }
    }
  }
  for (int i = 0; i < n_inputs; ++i) {
    if (!input_used[i]) throw ValidationError("input x" + std::to_string(i) + " is never read");
  }
  std::size_t sinks = 0;
  for (const auto& c : consumers) sinks += c.empty() ? 1 : 0;
  if (sinks != 1) {
    throw ValidationError("graph must have exactly one sink, found " + std::to_string(sinks));
  }

  // Kahn's algorithm; ties resolved by declaration order.
  std::vector<std::size_t> order;
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  while (!ready.empty()) {
    const auto it = std::min_element(ready.begin(), ready.end());
    const std::size_t v = *it;
    ready.erase(it);
    order.push_back(v);
    for (std::size_t w : consumers[v]) {
      if (--indegree[w] == 0) ready.push_back(w);
    }
  }
  if (order.size() != spec.size()) throw ValidationError("graph contains a cycle");
  // Every non-sink node has a consumer, hence a path to the sink, so the sink is last.
  std::vector<std::size_t> new_pos(spec.size());
  for (std::size_t k = 0; k < order.size(); ++k) new_pos[order[k]] = k;

  FunctionGraph graph;
  graph.n_inputs_ = n_inputs;
  graph.nodes_.reserve(spec.size());
  for (std::size_t v : order) {
    NodeSpec node = spec[v];
    for (auto& src : node.in_edges) {
      if (src.kind == Source::Kind::kNode) src.index = static_cast<int>(new_pos[position[src.index]]);
    }
    graph.nodes_.push_back(std::move(node));
  }
  return graph;
}

inline bool is_power_of_two(long long n) { return n > 0 && (n & (n - 1)) == 0; }

inline int log2_exact(long long n) {
  int levels = 0;
  while ((1LL << levels) < n) ++levels;
  return levels;
}

/// Complete binary tree over n = 2^l inputs (x0,x1), (x2,x3), ...; every node
/// on level j computes level_fns[j]. Level 0 reads the inputs.
inline FunctionGraph build_binary_tree(int n_inputs, const std::vector<ConstituentFn>& level_fns) {
  if (n_inputs < 2 || !is_power_of_two(n_inputs)) {
    throw ValidationError("binary tree needs n_inputs = 2^l with l >= 1, got " +
                          std::to_string(n_inputs));
  }
  const int levels = log2_exact(n_inputs);
  if (static_cast<int>(level_fns.size()) != levels) {
    throw ValidationError("binary tree over " + std::to_string(n_inputs) + " inputs needs " +
                          std::to_string(levels) + " level functions, got " +
                          std::to_string(level_fns.size()));
  }
  for (const auto& fn : level_fns) {
    if (arity(fn) != 2) throw ValidationError("tree level functions must be binary");
  }
  std::vector<NodeSpec> spec;
  std::vector<Source> previous;
  for (int i = 0; i < n_inputs; ++i) previous.push_back(Source::input(i));
  int next_id = 0;
  for (int level = 0; level < levels; ++level) {
    std::vector<Source> current;
    for (std::size_t i = 0; i + 1 < previous.size(); i += 2) {
      spec.push_back({next_id, {previous[i], previous[i + 1]}, level_fns[level]});
      current.push_back(Source::node(next_id));
      ++next_id;
    }
    previous = std::move(current);
  }
  return build_dag(std::move(spec), n_inputs);
}

/// Node positions grouped by tree level (level 0 reads inputs), or nullopt
/// when the graph is not a layered binary tree that reads every input once.
inline std::optional<std::vector<std::vector<std::size_t>>> tree_levels(const FunctionGraph& graph) {
  const auto& nodes = graph.nodes();
  std::vector<int> level(nodes.size(), -1);
  std::vector<int> uses(nodes.size(), 0);
  std::vector<int> input_uses(graph.n_inputs(), 0);
  int depth = 0;
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    const auto& node = nodes[v];
    if (node.in_edges.size() != 2) return std::nullopt;
    const auto& a = node.in_edges[0];
    const auto& b = node.in_edges[1];
    if (a.kind != b.kind) return std::nullopt;
    if (a.kind == Source::Kind::kInput) {
      ++input_uses[a.index];
      ++input_uses[b.index];
      level[v] = 0;
    } else {
      if (level[a.index] != level[b.index]) return std::nullopt;
      ++uses[a.index];
      ++uses[b.index];
      level[v] = level[a.index] + 1;
    }
    depth = std::max(depth, level[v] + 1);
  }
  for (int u : input_uses) {
    if (u != 1) return std::nullopt;
  }
  for (std::size_t v = 0; v + 1 < nodes.size(); ++v) {
    if (uses[v] != 1) return std::nullopt;
  }
  if (nodes.size() + 1 != static_cast<std::size_t>(graph.n_inputs())) return std::nullopt;
  std::vector<std::vector<std::size_t>> levels(depth);
  for (std::size_t v = 0; v < nodes.size(); ++v) levels[level[v]].push_back(v);
  return levels;
}

/// True iff every node inside each tree level carries the same function.
inline bool is_shift_invariant(const FunctionGraph& graph) {
  const auto levels = tree_levels(graph);
  if (!levels) throw ValidationError("is_shift_invariant requires a layered binary tree");
  for (const auto& level : *levels) {
    for (std::size_t v : level) {
      if (!(graph.nodes()[v].fn == graph.nodes()[level.front()].fn)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Lipschitz estimates
// ---------------------------------------------------------------------------

struct Interval {
  double lo = -1.0, hi = 1.0;
  double width() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

/// Per-coordinate sup of |partial derivative| over a box, estimated by
/// difference quotients between neighbouring points of a regular grid with
/// `resolution` points per axis. Each quotient is a mean-value-theorem
/// witness, so the estimate never exceeds the true sup.
inline std::array<double, 2> partial_sups(const ConstituentFn& fn, int resolution,
                                          Interval bx = {}, Interval by = {}) {
  if (resolution < 2) throw ValidationError("lipschitz grid resolution must be >= 2");
  const double hx = bx.width() / (resolution - 1);
  if (arity(fn) == 1) {
    double best = 0.0;
    double prev = apply(fn, bx.lo);
    for (int i = 1; i < resolution; ++i) {
      const double cur = apply(fn, bx.lo + i * hx);
      best = std::max(best, std::abs(cur - prev) / hx);
      prev = cur;
    }
    return {best, 0.0};
  }
  const double hy = by.width() / (resolution - 1);
  std::vector<double> row_prev(resolution), row_cur(resolution);
  std::array<double, 2> best{0.0, 0.0};
  for (int j = 0; j < resolution; ++j) {
    const double y = by.lo + j * hy;
    for (int i = 0; i < resolution; ++i) row_cur[i] = apply(fn, bx.lo + i * hx, y);
    for (int i = 1; i < resolution; ++i) {
      best[0] = std::max(best[0], std::abs(row_cur[i] - row_cur[i - 1]) / hx);
    }
    if (j > 0 && hy > 0.0) {
      for (int i = 0; i < resolution; ++i) {
        best[1] = std::max(best[1], std::abs(row_cur[i] - row_prev[i]) / hy);
      }
    }
    std::swap(row_prev, row_cur);
  }
  return best;
}

/// Lipschitz constant (sup-norm of the gradient, i.e. the largest partial
/// derivative magnitude) on [-1,1]^arity; a lower bound that converges as the
/// resolution grows.
inline double lipschitz_estimate(const ConstituentFn& fn, int grid_resolution) {
  const auto sups = partial_sups(fn, grid_resolution);
  return std::max(sups[0], sups[1]);
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// M samples in [-1,1]^n, row-major.
struct Dataset {
  int n_inputs = 0;
  std::vector<double> inputs;
  std::vector<double> targets;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return targets.size(); }
  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * n_inputs, static_cast<std::size_t>(n_inputs)};
  }
  bool operator==(const Dataset&) const = default;
};

template <typename F>
concept TargetFunction = requires(const F& f, std::span<const double> x) {
  { f(x) } -> std::convertible_to<double>;
};

/// Inputs come from Rng(seed); noise from an independent stream derived from
/// the same seed, so the inputs do not depend on sigma.
template <TargetFunction F>
Dataset sample_dataset(const F& target, int n_inputs, std::size_t count, double noise_sigma,
                       std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample_dataset needs M >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("noise sigma must be finite and >= 0");
  }
  Dataset data;
  data.n_inputs = n_inputs;
  data.noise_sigma = noise_sigma;
  data.seed = seed;
  data.inputs.resize(count * n_inputs);
  data.targets.resize(count);
  Rng input_rng(seed);
  Rng noise_rng(mix_seed(seed, 1));
  for (std::size_t i = 0; i < count; ++i) {
    double* row = data.inputs.data() + i * n_inputs;
    for (int j = 0; j < n_inputs; ++j) row[j] = input_rng.uniform(-1.0, 1.0);
    double y = target(std::span<const double>(row, n_inputs));
    if (noise_sigma > 0.0) y += noise_sigma * noise_rng.normal();
    data.targets[i] = y;
  }
  return data;
}

inline Dataset sample_dataset(const FunctionGraph& graph, std::size_t count, double noise_sigma,
                              std::uint64_t seed) {
  return sample_dataset(graph, graph.n_inputs(), count, noise_sigma, seed);
}

/// Row i of the result has coordinate j taken from coordinate perm[j] of the input row.
inline Dataset permute_coordinates(const Dataset& data, std::span<const std::size_t> perm) {
  if (perm.size() != static_cast<std::size_t>(data.n_inputs)) {
    throw ValidationError("permutation length does not match input dimension");
  }
  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto src = data.row(i);
    double* dst = out.inputs.data() + i * data.n_inputs;
    for (std::size_t j = 0; j < perm.size(); ++j) dst[j] = src[perm[j]];
  }
  return out;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inverse[perm[j]] = j;
  return inverse;
}

/// One fixed coordinate permutation, drawn from perm_seed, applied to every row.
inline Dataset shuffle_coordinates(const Dataset& data, std::uint64_t perm_seed) {
  if (data.size() == 0) throw ValidationError("shuffle_coordinates needs a nonempty dataset");
  const auto perm = random_permutation(data.n_inputs, perm_seed);
  return permute_coordinates(data, perm);
}

/// Header "x1,...,xn,y", one row per sample, 17 significant digits.
inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (int j = 0; j < data.n_inputs; ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << format_double(v) << ',';
    out << format_double(data.targets[i]) << '\n';
  }
}

/// Leading '#' lines are skipped.
inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  bool got = false;
  while ((got = static_cast<bool>(std::getline(in, line))) && line.rfind('#', 0) == 0) {
  }
  if (!got) throw ValidationError("dataset CSV is empty");
  const auto header = split(trim(line), ',');
  if (header.size() < 2 || trim(header.back()) != "y") {
    throw ValidationError("dataset CSV header must be x1,...,xn,y");
  }
  Dataset data;
  data.n_inputs = static_cast<int>(header.size()) - 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw ValidationError("dataset CSV line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells");
    }
    for (std::size_t j = 0; j + 1 < cells.size(); ++j) data.inputs.push_back(std::stod(cells[j]));
    data.targets.push_back(std::stod(cells.back()));
  }
  return data;
}

}  // namespace compnet

#endif  // COMPNET_COMPFN_HPP_
