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

// Analytic approximators: ReLU min and indicator gadgets, piecewise-constant
// tree approximation, polynomial least-squares fits (flat and per tree node),
// the power-tower evaluator, ramp/abs conversion and the product tree.

#ifndef COMPNET_CONSTRUCT_HPP_
#define COMPNET_CONSTRUCT_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compnet/compfn.hpp"
#include "compnet/error.hpp"
#include "compnet/format.hpp"
#include "compnet/nets.hpp"

namespace compnet {

// ---------------------------------------------------------------------------
// Error reports
// ---------------------------------------------------------------------------

struct ConstructReport {
  std::string construct;
  std::vector<std::pair<std::string, double>> values;

  void add(std::string param, double value) { values.emplace_back(std::move(param), value); }
  double get(const std::string& param) const {
    for (const auto& [k, v] : values) {
      if (k == param) return v;
    }
    throw ValidationError("report has no value '" + param + "'");
  }
};

/// "construct,param,value"
inline void write_report_csv(std::ostream& out, std::span<const ConstructReport> reports,
                             bool header = true) {
  if (header) out << "construct,param,value\n";
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.values) out << r.construct << ',' << k << ',' << format_double(v) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Composite-midpoint estimate of ||f - g||_{L2(domain)}.
template <typename F, typename G>
double quad_l2_error(const F& f, const G& g, Interval domain, long nodes) {
  if (nodes < 2) throw ValidationError("quadrature needs at least 2 nodes");
  const double h = domain.width() / static_cast<double>(nodes);
  double sum = 0.0;
  for (long i = 0; i < nodes; ++i) {
    const double x = domain.lo + (static_cast<double>(i) + 0.5) * h;
    const double d = f(x) - g(x);
    sum += d * d;
  }
  return std::sqrt(sum * h);
}

/// Tensor composite-midpoint estimate of ||f - g||_{L2(box)} with `nodes` per axis.
template <typename F, typename G>
double quad_l2_error_2d(const F& f, const G& g, Interval bx, Interval by, long nodes) {
  if (nodes < 2) throw ValidationError("quadrature needs at least 2 nodes");
  const double hx = bx.width() / static_cast<double>(nodes);
  const double hy = by.width() / static_cast<double>(nodes);
  double sum = 0.0;
  for (long i = 0; i < nodes; ++i) {
    const double x = bx.lo + (static_cast<double>(i) + 0.5) * hx;
    for (long j = 0; j < nodes; ++j) {
      const double y = by.lo + (static_cast<double>(j) + 0.5) * hy;
      const double d = f(x, y) - g(x, y);
      sum += d * d;
    }
  }
  return std::sqrt(sum * hx * hy);
}

// ---------------------------------------------------------------------------
// ReLU gadgets
// ---------------------------------------------------------------------------

/// min(x1, x2) = (x1)_+ - (-x1)_+ - (x1 - x2)_+, as a 3-unit shallow net.
inline ShallowNet relu_min() {
  ShallowNet net{2, 3, Activation::kReLU, {}};
  net.params.assign(param_count(net), 0.0);
  net.weight(0, 0) = 1.0;
  net.weight(1, 0) = -1.0;
  net.weight(2, 0) = 1.0;
  net.weight(2, 1) = -1.0;
  net.coeff(0) = 1.0;
  net.coeff(1) = -1.0;
  net.coeff(2) = -1.0;
  return net;
}

// Same arithmetic, in the same order, as forward(relu_min(), {a, b}).
inline double gadget_min(double a, double b) {
  double sum = 0.0;
  sum += std::max(0.0, a);
  sum += -std::max(0.0, -a);
  sum += -std::max(0.0, a - b);
  return sum;
}

struct IndicatorSpec {
  double x0 = 0.0, x1 = 1.0;
  double eta = 0.01;

  void validate() const {
    if (!(x0 < x1)) throw ValidationError("indicator interval needs x0 < x1");
    if (!(eta > 0.0)) throw ValidationError("indicator knot width must be > 0");
    if (!(eta < x1 - x0)) throw ValidationError("knot width must be smaller than the interval length");
  }
};

/// Trapezoid from ramps at rise, rise+eta, fall, fall+eta with coefficients
/// +-1/eta, summed in unit order. Matches forward(indicator_1d(...), x).
inline double trapezoid(double x, double rise, double fall, double eta) {
  const double a = 1.0 / eta;
  double sum = 0.0;
  sum += a * std::max(0.0, x - rise);
  sum += -a * std::max(0.0, x - (rise + eta));
  sum += -a * std::max(0.0, x - fall);
  sum += a * std::max(0.0, x - (fall + eta));
  return sum;
}

/// 4-unit ReLU bump: 0 up to x0, rising to 1 on [x0, x0+eta], 1 up to x1,
/// falling to 0 on [x1, x1+eta].
inline ShallowNet indicator_1d(const IndicatorSpec& spec) {
  spec.validate();
  ShallowNet net{1, 4, Activation::kReLU, {}};
  net.params.assign(param_count(net), 0.0);
  const double a = 1.0 / spec.eta;
  const double knots[4] = {spec.x0, spec.x0 + spec.eta, spec.x1, spec.x1 + spec.eta};
  const double coeffs[4] = {a, -a, -a, a};
  for (int k = 0; k < 4; ++k) {
    net.weight(k, 0) = 1.0;
    net.bias(k) = -knots[k];
    net.coeff(k) = coeffs[k];
  }
  return net;
}

struct Rect {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
};

/// Two bumps feeding the min gadget: 4 + 4 + 3 units.
struct Indicator2D {
  ShallowNet x_bump, y_bump, min_gadget;

  std::size_t unit_count() const {
    return static_cast<std::size_t>(x_bump.units + y_bump.units + min_gadget.units);
  }
  double operator()(double x, double y) const {
    const double bx = forward(x_bump, std::span<const double>(&x, 1));
    const double by = forward(y_bump, std::span<const double>(&y, 1));
    const double pair[2] = {bx, by};
    return forward(min_gadget, pair);
  }
};

inline Indicator2D indicator_2d(const Rect& rect, double eta) {
  if (rect.x0 < 0.0 || rect.x1 > 1.0 || rect.y0 < 0.0 || rect.y1 > 1.0) {
    throw ValidationError("indicator rectangle must lie in [0,1]^2");
  }
  return {indicator_1d({rect.x0, rect.x1, eta}), indicator_1d({rect.y0, rect.y1, eta}), relu_min()};
}

// ---------------------------------------------------------------------------
// Piecewise-constant tree approximation
// ---------------------------------------------------------------------------

namespace detail {

// ceil() that ignores round-off just above an integer.
inline int ceil_tolerant(double x) {
  return static_cast<int>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}

}  // namespace detail

/// Uniform partition of [lo, hi] into `cells`, one trapezoid bump per cell.
/// Bump j rises at knot j and falls at knot j+1; the outer bumps extend by
/// `margin` so the ends of the range sit on plateaus. Neighbouring bumps sum
/// to one across each transition.
struct Partition {
  double lo = 0.0, hi = 1.0;
  int cells = 1;
  double eta = 1e-9;
  double margin = 1.0;

  double cell_width() const { return (hi - lo) / cells; }
  double knot(int j) const { return j == cells ? hi : lo + j * cell_width(); }
  double center(int j) const { return lo + (j + 0.5) * cell_width(); }
  double rise(int j) const { return j == 0 ? lo - margin : knot(j); }
  double fall(int j) const { return j == cells - 1 ? hi + margin : knot(j + 1); }
  double bump(int j, double x) const { return trapezoid(x, rise(j), fall(j), eta); }
  int locate(double x) const {
    if (!(hi > lo)) return 0;
    const double pos = std::floor((x - lo) / cell_width());
    return static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(cells - 1)));
  }
};

struct PwcNode {
  int arity = 2;
  std::array<Partition, 2> axes;
  std::vector<double> table;  // cells_x * cells_y, row = x cell
  std::array<double, 2> lipschitz{0.0, 0.0};
  int k = 1;
  double own_bound = 0.0;
  double propagated_bound = 0.0;
  std::size_t units = 0;

  double value(int i, int j) const { return table[static_cast<std::size_t>(i) * axes[1].cells + j]; }

  // Network output with only the bumps that can be nonzero.
  double evaluate(double u, double v) const {
    const int ci = axes[0].locate(u);
    if (arity == 1) {
      double sum = 0.0;
      for (int i = std::max(0, ci - 1); i <= std::min(axes[0].cells - 1, ci + 1); ++i) {
        const double b = axes[0].bump(i, u);
        if (b != 0.0) sum += table[i] * b;
      }
      return sum;
    }
    const int cj = axes[1].locate(v);
    double sum = 0.0;
    for (int i = std::max(0, ci - 1); i <= std::min(axes[0].cells - 1, ci + 1); ++i) {
      const double bx = axes[0].bump(i, u);
      if (bx == 0.0) continue;
      for (int j = std::max(0, cj - 1); j <= std::min(axes[1].cells - 1, cj + 1); ++j) {
        const double by = axes[1].bump(j, v);
        if (by == 0.0) continue;
        sum += value(i, j) * gadget_min(bx, by);
      }
    }
    return sum;
  }

  // Every unit of the node, in order. O(k^2); for cross-checks.
  double evaluate_dense(double u, double v) const {
    double sum = 0.0;
    if (arity == 1) {
      for (int i = 0; i < axes[0].cells; ++i) sum += table[i] * axes[0].bump(i, u);
      return sum;
    }
    std::vector<double> by(axes[1].cells);
    for (int j = 0; j < axes[1].cells; ++j) by[j] = axes[1].bump(j, v);
    for (int i = 0; i < axes[0].cells; ++i) {
      const double bx = axes[0].bump(i, u);
      for (int j = 0; j < axes[1].cells; ++j) sum += value(i, j) * gadget_min(bx, by[j]);
    }
    return sum;
  }
};

struct PwcOptions {
  Interval domain{-1.0, 1.0};  // every input coordinate
  double eta_fraction = 1e-6;  // knot width relative to the cell width
  int lipschitz_resolution = 401;
};

/// Deep ReLU network of indicator gadgets mirroring a binary-tree graph; each
/// node is a piecewise-constant table of its constituent function.
struct PwcTreeApprox {
  FunctionGraph graph;
  double epsilon = 0.0;
  std::vector<PwcNode> nodes;  // graph topological order

  double evaluate(std::span<const double> x, bool dense = false) const {
    std::vector<double> values(nodes.size());
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      const auto& spec = graph.nodes()[v];
      double args[2] = {0.0, 0.0};
      for (std::size_t e = 0; e < spec.in_edges.size(); ++e) {
        const auto& src = spec.in_edges[e];
        args[e] = src.kind == Source::Kind::kInput ? x[src.index] : values[src.index];
      }
      values[v] = dense ? nodes[v].evaluate_dense(args[0], args[1]) : nodes[v].evaluate(args[0], args[1]);
    }
    return values.back();
  }
  double operator()(std::span<const double> x) const { return evaluate(x); }

  std::size_t total_units() const {
    std::size_t total = 0;
    for (const auto& n : nodes) total += n.units;
    return total;
  }
  double error_bound() const { return nodes.back().propagated_bound; }
  // The constant c in "sup error <= c * epsilon", as actually propagated.
  double constant() const { return error_bound() / epsilon; }
};

/// Builds the piecewise-constant approximation node by node.
///
/// For a node with per-coordinate Lipschitz constants Lx, Ly (estimated on
/// the box its inputs can reach), k = ceil((Lx + Ly) * span / epsilon) cells
/// per axis and table values at cell centres give an own sup error of at most
/// (Lx * wx + Ly * wy) / (2k) <= epsilon / 2. Errors compose as
/// E_v = own_v + Lx * E_left + Ly * E_right.
inline PwcTreeApprox pwc_tree_approx(const FunctionGraph& graph, double epsilon,
                                     const PwcOptions& options = {}) {
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (!tree_levels(graph)) throw ValidationError("pwc_tree_approx requires a layered binary tree");
  PwcTreeApprox approx{graph, epsilon, {}};
  for (const auto& spec : graph.nodes()) {
    PwcNode node;
    node.arity = arity(spec.fn);
    std::array<Interval, 2> lip_box{Interval{0.0, 0.0}, Interval{0.0, 0.0}};
    std::array<double, 2> child_error{0.0, 0.0};
    for (int e = 0; e < node.arity; ++e) {
      const auto& src = spec.in_edges[e];
      Partition& axis = node.axes[e];
      if (src.kind == Source::Kind::kInput) {
        axis.lo = options.domain.lo;
        axis.hi = options.domain.hi;
      } else {
        const auto& child = approx.nodes[src.index];
        const auto [mn, mx] = std::minmax_element(child.table.begin(), child.table.end());
        axis.lo = *mn;
        axis.hi = *mx;
        child_error[e] = child.propagated_bound;
      }
      lip_box[e] = {axis.lo - child_error[e], axis.hi + child_error[e]};
    }
    node.lipschitz = partial_sups(spec.fn, options.lipschitz_resolution, lip_box[0], lip_box[1]);
    const double lip_sum = node.lipschitz[0] + node.lipschitz[1];
    double span = 0.0;
    for (int e = 0; e < node.arity; ++e) span = std::max(span, node.axes[e].hi - node.axes[e].lo);
    node.k = std::max(1, detail::ceil_tolerant(lip_sum * span / epsilon));
    for (int e = 0; e < node.arity; ++e) {
      Partition& axis = node.axes[e];
      axis.cells = node.k;
      const double width = axis.hi > axis.lo ? axis.cell_width() : 1.0;
      axis.eta = options.eta_fraction * width;
      axis.margin = std::max(1.0, axis.hi - axis.lo);
    }
    if (node.arity == 1) {
      node.axes[1] = Partition{0.0, 0.0, 1, 1.0, 1.0};
      for (int i = 0; i < node.k; ++i) node.table.push_back(apply(spec.fn, node.axes[0].center(i)));
      node.units = 4 * static_cast<std::size_t>(node.k);
    } else {
      node.table.resize(static_cast<std::size_t>(node.k) * node.k);
      for (int i = 0; i < node.k; ++i) {
        for (int j = 0; j < node.k; ++j) {
          node.table[static_cast<std::size_t>(i) * node.k + j] =
              apply(spec.fn, node.axes[0].center(i), node.axes[1].center(j));
        }
      }
      node.units = 8 * static_cast<std::size_t>(node.k) + 3 * static_cast<std::size_t>(node.k) * node.k;
    }
    for (int e = 0; e < node.arity; ++e) {
      node.own_bound += 0.5 * node.lipschitz[e] * (node.axes[e].hi - node.axes[e].lo) / node.k;
    }
    node.propagated_bound =
        node.own_bound + node.lipschitz[0] * child_error[0] + node.lipschitz[1] * child_error[1];
    approx.nodes.push_back(std::move(node));
  }
  return approx;
}

/// Largest |f(x) - g(x)| over the regular grid with `points` per axis on domain^n.
template <typename F, typename G>
double grid_sup_error(int n_inputs, int points, Interval domain, const F& f, const G& g) {
  if (points < 2) throw ValidationError("grid needs at least 2 points per axis");
  std::vector<int> idx(n_inputs, 0);
  std::vector<double> x(n_inputs, domain.lo);
  const double h = domain.width() / (points - 1);
  double worst = 0.0;
  while (true) {
    for (int j = 0; j < n_inputs; ++j) x[j] = domain.lo + idx[j] * h;
    worst = std::max(worst, std::abs(f(std::span<const double>(x)) - g(std::span<const double>(x))));
    int j = 0;
    while (j < n_inputs && ++idx[j] == points) idx[j++] = 0;
    if (j == n_inputs) break;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Polynomial least squares
// ---------------------------------------------------------------------------

inline double chebyshev(int degree, double t) {
  double prev = 1.0, cur = t;
  if (degree == 0) return 1.0;
  for (int d = 1; d < degree; ++d) {
    const double next = 2.0 * t * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Multi-indices of total degree <= k in n variables, graded order.
inline std::vector<std::vector<int>> total_degree_exponents(int n_vars, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(n_vars, 0);
  std::function<void(int, int)> rec = [&](int var, int remaining) {
    if (var == n_vars - 1) {
      for (int d = 0; d <= remaining; ++d) {
        current[var] = d;
        out.push_back(current);
      }
      return;
    }
    for (int d = 0; d <= remaining; ++d) {
      current[var] = d;
      rec(var + 1, remaining - d);
    }
  };
  rec(0, degree);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    int sa = 0, sb = 0;
    for (int v : a) sa += v;
    for (int v : b) sb += v;
    return sa < sb;
  });
  return out;
}

/// Polynomial of total degree <= k expanded in tensor Chebyshev polynomials
/// of the coordinates rescaled from their box to [-1, 1]. Same space as the
/// monomials, far better conditioned.
struct ChebyshevPolynomial {
  std::vector<Interval> domain;
  int degree = 0;
  std::vector<std::vector<int>> exponents;
  std::vector<double> coeffs;

  std::size_t term_count() const { return exponents.size(); }

  void basis(std::span<const double> x, std::span<double> out) const {
    const auto n = domain.size();
    // tables[v * (degree + 1) + d] = T_d(t_v); small cases stay on the stack.
    constexpr std::size_t kInline = 4 * 64;
    double inline_tables[kInline];
    std::vector<double> heap;
    const std::size_t stride = static_cast<std::size_t>(degree) + 1;
    double* tables = inline_tables;
    if (n * stride > kInline) {
      heap.resize(n * stride);
      tables = heap.data();
    }
    for (std::size_t v = 0; v < n; ++v) {
      double* row = tables + v * stride;
      const double t = (2.0 * x[v] - domain[v].lo - domain[v].hi) / domain[v].width();
      row[0] = 1.0;
      if (degree >= 1) row[1] = t;
      for (int d = 2; d <= degree; ++d) row[d] = 2.0 * t * row[d - 1] - row[d - 2];
    }
    for (std::size_t r = 0; r < exponents.size(); ++r) {
      double prod = 1.0;
      for (std::size_t v = 0; v < n; ++v) prod *= tables[v * stride + exponents[r][v]];
      out[r] = prod;
    }
  }

  double operator()(std::span<const double> x) const {
    constexpr std::size_t kInline = 512;
    double inline_phi[kInline];
    std::vector<double> heap;
    double* phi = inline_phi;
    if (exponents.size() > kInline) {
      heap.resize(exponents.size());
      phi = heap.data();
    }
    basis(x, std::span<double>(phi, exponents.size()));
    double sum = 0.0;
    for (std::size_t r = 0; r < exponents.size(); ++r) sum += coeffs[r] * phi[r];
    return sum;
  }
};

struct PolyFitSpec {
  int n_vars = 1;
  int degree = 3;
  int grid_resolution = 0;   // sample points per axis; 0 picks a default
  double ridge = 1e-10;      // lambda in (1/M)|A c - y|^2 + lambda |c|^2
  int error_resolution = 0;  // midpoint cells per axis for the error report; 0 picks a default

  void validate() const {
    if (n_vars < 1) throw ValidationError("poly_fit needs n_vars >= 1");
    if (degree < 0) throw ValidationError("poly_fit needs degree >= 0");
    if (ridge < 0.0) throw ValidationError("ridge must be >= 0");
  }
};

struct PolyFitReport {
  ChebyshevPolynomial poly;
  std::size_t coefficient_count = 0;  // C(n+k, k)
  std::size_t rank = 0;
  bool rank_deficient = false;
  double fit_rms_error = 0.0;  // on the sample grid
  double sup_error = 0.0;      // max over the error grid
  double l2_error = 0.0;       // midpoint-rule L2 norm over the box
};

namespace detail {

inline void tensor_grid(const std::vector<Interval>& box, int points, bool midpoints,
                        const std::function<void(std::span<const double>)>& visit) {
  const auto n = box.size();
  std::vector<int> idx(n, 0);
  std::vector<double> x(n);
  while (true) {
    for (std::size_t v = 0; v < n; ++v) {
      x[v] = midpoints ? box[v].lo + (idx[v] + 0.5) * box[v].width() / points
                       : box[v].lo + idx[v] * box[v].width() / (points - 1);
    }
    visit(x);
    std::size_t v = 0;
    while (v < n && ++idx[v] == points) idx[v++] = 0;
    if (v == n) break;
  }
}

}  // namespace detail

/// Least-squares fit over all polynomials of total degree <= k on a tensor
/// grid, solved by column-pivoted QR on the ridge-augmented system. Rank
/// deficiency of the plain design matrix is reported, not fatal.
template <typename F>
PolyFitReport poly_fit(const F& target, const PolyFitSpec& spec, std::vector<Interval> domain = {}) {
  spec.validate();
  if (domain.empty()) domain.assign(spec.n_vars, Interval{-1.0, 1.0});
  if (static_cast<int>(domain.size()) != spec.n_vars) throw ValidationError("domain/n_vars mismatch");
  for (auto& iv : domain) {
    if (!(iv.hi > iv.lo)) {
      // Degenerate axis: widen slightly so the rescaling stays finite.
      const double pad = std::max(1e-12, 1e-9 * std::abs(iv.lo));
      iv = {iv.lo - pad, iv.hi + pad};
    }
  }
  PolyFitReport report;
  report.poly.domain = domain;
  report.poly.degree = spec.degree;
  report.poly.exponents = total_degree_exponents(spec.n_vars, spec.degree);
  const auto r = report.poly.exponents.size();
  report.coefficient_count = r;

  int points = spec.grid_resolution;
  if (points <= 0) points = spec.n_vars == 1 ? std::max(64, 8 * (spec.degree + 1)) : std::max(24, 3 * (spec.degree + 1));
  if (points < 2) throw ValidationError("poly_fit grid needs at least 2 points per axis");

  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  std::vector<double> phi(r);
  detail::tensor_grid(domain, points, false, [&](std::span<const double> x) {
    report.poly.basis(x, phi);
    rows.push_back(phi);
    ys.push_back(target(x));
  });
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd a(m, static_cast<Eigen::Index>(r));
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < r; ++c) a(i, static_cast<Eigen::Index>(c)) = rows[i][c];
    y(i) = ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> plain(a);
  report.rank = static_cast<std::size_t>(plain.rank());
  report.rank_deficient = report.rank < r;

  Eigen::VectorXd coeffs;
  if (spec.ridge > 0.0) {
    const auto rr = static_cast<Eigen::Index>(r);
    Eigen::MatrixXd aug(m + rr, rr);
    aug.topRows(m) = a;
    aug.bottomRows(rr) = std::sqrt(spec.ridge * static_cast<double>(m)) * Eigen::MatrixXd::Identity(rr, rr);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + rr);
    rhs.head(m) = y;
    coeffs = aug.colPivHouseholderQr().solve(rhs);
  } else {
    coeffs = plain.solve(y);
  }
  report.poly.coeffs.assign(coeffs.data(), coeffs.data() + coeffs.size());
  report.fit_rms_error = std::sqrt((a * coeffs - y).squaredNorm() / static_cast<double>(m));

  int err_points = spec.error_resolution;
  if (err_points <= 0) err_points = spec.n_vars == 1 ? 20000 : (spec.n_vars == 2 ? 200 : 16);
  double cell = 1.0;
  for (const auto& iv : domain) cell *= iv.width() / err_points;
  double sum = 0.0;
  detail::tensor_grid(domain, err_points, true, [&](std::span<const double> x) {
    const double d = target(x) - report.poly(x);
    report.sup_error = std::max(report.sup_error, std::abs(d));
    sum += d * d;
  });
  report.l2_error = std::sqrt(sum * cell);
  return report;
}

/// Least-squares slope of log(errors) against log(degrees).
inline double loglog_slope(std::span<const double> degrees, std::span<const double> errors) {
  const auto n = static_cast<double>(degrees.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const double lx = std::log(degrees[i]), ly = std::log(errors[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct PolyTreeNode {
  PolyFitReport fit;
  std::vector<Interval> fit_box;      // true ranges of the node's inputs
  std::vector<Interval> error_box;    // fit box widened by the children's bounds
  Interval output_range;              // range of the constituent over fit_box
  std::array<double, 2> lipschitz{0.0, 0.0};
  double node_error = 0.0;            // sup |h - P| over error_box
  double propagated_bound = 0.0;
};

struct PolyTreeReport {
  FunctionGraph graph;
  int degree = 0;
  std::vector<PolyTreeNode> nodes;
  std::size_t coefficient_budget = 0;  // sum over nodes of C(d_v + k, k)

  double evaluate(std::span<const double> x) const {
    std::vector<double> values(nodes.size());
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      const auto& spec = graph.nodes()[v];
      double args[2] = {0.0, 0.0};
      for (std::size_t e = 0; e < spec.in_edges.size(); ++e) {
        const auto& src = spec.in_edges[e];
        args[e] = src.kind == Source::Kind::kInput ? x[src.index] : values[src.index];
      }
      values[v] = nodes[v].fit.poly(std::span<const double>(args, spec.in_edges.size()));
    }
    return values.back();
  }
  double operator()(std::span<const double> x) const { return evaluate(x); }
  double error_bound() const { return nodes.back().propagated_bound; }
};

struct PolyTreeOptions {
  Interval domain{-1.0, 1.0};
  int grid_resolution = 0;
  int error_resolution = 121;  // grid points per axis when measuring node errors
  int lipschitz_resolution = 401;
  double ridge = 1e-10;
};

/// Fits every constituent with a degree-k polynomial on the box its inputs
/// range over, composes the fits, and propagates the per-node sup errors:
/// E_v = eps_v + Lx * E_left + Ly * E_right.
inline PolyTreeReport poly_tree_fit(const FunctionGraph& graph, int k, const PolyTreeOptions& options = {}) {
  if (!tree_levels(graph)) throw ValidationError("poly_tree_fit requires a layered binary tree");
  PolyTreeReport report{graph, k, {}, 0};
  for (const auto& spec : graph.nodes()) {
    PolyTreeNode node;
    const int d = arity(spec.fn);
    std::array<double, 2> child_error{0.0, 0.0};
    for (int e = 0; e < d; ++e) {
      const auto& src = spec.in_edges[e];
      if (src.kind == Source::Kind::kInput) {
        node.fit_box.push_back(options.domain);
      } else {
        node.fit_box.push_back(report.nodes[src.index].output_range);
        child_error[e] = report.nodes[src.index].propagated_bound;
      }
      node.error_box.push_back({node.fit_box[e].lo - child_error[e], node.fit_box[e].hi + child_error[e]});
    }
    auto h = [&spec](std::span<const double> x) { return apply(spec.fn, x[0], x.size() > 1 ? x[1] : 0.0); };
    PolyFitSpec fit_spec{d, k, options.grid_resolution, options.ridge, 2};
    node.fit = poly_fit(h, fit_spec, node.fit_box);
    report.coefficient_budget += node.fit.coefficient_count;

    double lo = INFINITY, hi = -INFINITY;
    detail::tensor_grid(node.fit_box, options.error_resolution, false, [&](std::span<const double> x) {
      const double v = h(x);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    });
    node.output_range = {lo, hi};
    detail::tensor_grid(node.error_box, options.error_resolution, false, [&](std::span<const double> x) {
      node.node_error = std::max(node.node_error, std::abs(h(x) - node.fit.poly(x)));
    });
    node.lipschitz = partial_sups(spec.fn, options.lipschitz_resolution, node.error_box[0],
                                  d > 1 ? node.error_box[1] : Interval{0.0, 0.0});
    node.propagated_bound =
        node.node_error + node.lipschitz[0] * child_error[0] + node.lipschitz[1] * child_error[1];
    report.nodes.push_back(std::move(node));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Power tower
// ---------------------------------------------------------------------------

/// A x^2 y^2 + B x^2 y + C x y^2 + D x^2 + 2E xy + F y^2 + 2G x + 2H y + I
struct InnerQuadratic {
  double A = 0, B = 0, C = 0, D = 0, E = 0, F = 0, G = 0, H = 0, I = 0;

  double operator()(double x, double y) const {
    return A * x * x * y * y + B * x * x * y + C * x * y * y + D * x * x + 2.0 * E * x * y +
           F * y * y + 2.0 * G * x + 2.0 * H * y + I;
  }
};

/// inner(x, y)^(2^s) computed by s successive squarings: one layer of 9
/// units for the inner quadratic and 3 units per squaring layer.
struct PowerTower {
  InnerQuadratic inner;
  int squarings = 10;

  std::size_t unit_count() const { return 9 + 3 * static_cast<std::size_t>(squarings); }
  int layer_count() const { return squarings + 1; }

  double evaluate(double x, double y) const {
    double v = checked_inner(x, y);
    for (int i = 0; i < squarings; ++i) v *= v;
    return v;
  }
  double direct(double x, double y) const {
    return std::pow(checked_inner(x, y), std::ldexp(1.0, squarings));
  }

 private:
  double checked_inner(double x, double y) const {
    const double v = inner(x, y);
    if (!(std::abs(v) <= 1.0)) {
      throw DomainError("power tower needs |inner| <= 1, got " + format_short(v));
    }
    return v;
  }
};

inline PowerTower power_tower(const InnerQuadratic& inner, int s) {
  if (s < 1) throw ValidationError("power tower height must be >= 1");
  for (double c : {inner.A, inner.B, inner.C, inner.D, inner.E, inner.F, inner.G, inner.H, inner.I}) {
    if (!std::isfinite(c)) throw ValidationError("power tower coefficients must be finite");
  }
  return {inner, s};
}

// ---------------------------------------------------------------------------
// Ramp <-> absolute value
// ---------------------------------------------------------------------------

/// sum_i coeffs[i] * (x - knots[i])_+
struct RampCombo {
  std::vector<double> coeffs, knots;

  double operator()(double x) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) sum += coeffs[i] * std::max(0.0, x - knots[i]);
    return sum;
  }
};

/// sum_i coeffs[i] * |x - knots[i]| + slope * x + intercept
struct AbsCombo {
  std::vector<double> coeffs, knots;
  double slope = 0.0, intercept = 0.0;

  double operator()(double x) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) sum += coeffs[i] * std::abs(x - knots[i]);
    return sum + slope * x + intercept;
  }
};

/// Uses (t)_+ = (t + |t|) / 2 term by term.
inline AbsCombo ramp_to_abs(const RampCombo& ramps, Interval interval) {
  if (ramps.coeffs.size() != ramps.knots.size()) throw ValidationError("ramp coefficient/knot mismatch");
  if (!(interval.hi > interval.lo)) throw ValidationError("interval must have positive length");
  AbsCombo out;
  for (std::size_t i = 0; i < ramps.coeffs.size(); ++i) {
    if (ramps.knots[i] < interval.lo || ramps.knots[i] > interval.hi) {
      throw ValidationError("ramp knot " + format_short(ramps.knots[i]) + " lies outside the interval");
    }
    out.coeffs.push_back(0.5 * ramps.coeffs[i]);
    out.knots.push_back(ramps.knots[i]);
    out.slope += 0.5 * ramps.coeffs[i];
    out.intercept -= 0.5 * ramps.coeffs[i] * ramps.knots[i];
  }
  return out;
}

/// Absorbs the affine part into two kernels with knots just outside the
/// interval, leaving a pure sum of |x - b| that agrees on the interval:
/// on [lo, hi], |x - a| - |x - b| = 2x - a - b and |x - a| + |x - b| = b - a.
inline AbsCombo fold_affine(const AbsCombo& combo, Interval interval) {
  const double pad = std::max(1.0, interval.width());
  const double a = interval.lo - pad, b = interval.hi + pad;
  AbsCombo out = combo;
  out.slope = out.intercept = 0.0;
  // slope * x = (slope/2) (|x-a| - |x-b|) + slope (a+b)/2
  const double constant = combo.intercept + combo.slope * (a + b) / 2.0;
  out.coeffs.push_back(combo.slope / 2.0 + constant / (b - a));
  out.knots.push_back(a);
  out.coeffs.push_back(-combo.slope / 2.0 + constant / (b - a));
  out.knots.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------
// Product tree
// ---------------------------------------------------------------------------

inline FunctionGraph product_tree(int d) {
  if (d < 2 || !is_power_of_two(d)) throw ValidationError("product tree needs d = 2^l, l >= 1");
  return build_binary_tree(d, std::vector<ConstituentFn>(log2_exact(d), Product{}));
}

/// Sign vectors in {-1,+1}^d (all 2^d of them) where the tree disagrees with
/// the parity computed by counting -1 entries.
inline std::uint64_t parity_mismatches(const FunctionGraph& tree) {
  const int d = tree.n_inputs();
  if (d > 24) throw ValidationError("exhaustive parity check limited to d <= 24");
  std::vector<double> x(d);
  std::vector<double> values;
  std::uint64_t mismatches = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << d); ++mask) {
    int negatives = 0;
    for (int j = 0; j < d; ++j) {
      const bool neg = (mask >> j) & 1ULL;
      x[j] = neg ? -1.0 : 1.0;
      negatives += neg;
    }
    tree.evaluate_nodes(x, values);
    if (values.back() != (negatives % 2 ? -1.0 : 1.0)) ++mismatches;
  }
  return mismatches;
}

}  // namespace compnet

#endif  // COMPNET_CONSTRUCT_HPP_
