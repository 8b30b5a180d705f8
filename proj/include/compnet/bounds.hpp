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

// Closed-form complexity, gap, effective-dimension, memory and
// generalization calculators. Every O(.) is evaluated with constant 1, so
// results are orders of magnitude, not sharp counts.

#ifndef COMPNET_BOUNDS_HPP_
#define COMPNET_BOUNDS_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "compnet/compfn.hpp"
#include "compnet/error.hpp"
#include "compnet/format.hpp"

namespace compnet {

namespace detail {

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be finite and > 0");
}
inline void require_unit_open(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw ValidationError(std::string(name) + " must lie in (0, 1)");
}

}  // namespace detail

/// eps^(-n/m)
inline double shallow_complexity(double n, double m, double epsilon) {
  detail::require_positive(n, "n");
  detail::require_positive(m, "m");
  detail::require_unit_open(epsilon, "epsilon");
  return std::pow(epsilon, -n / m);
}

/// (n - 1) eps^(-2/m)
inline double deep_complexity(double n, double m, double epsilon) {
  if (!(n >= 2.0)) throw ValidationError("deep complexity needs n >= 2");
  detail::require_positive(m, "m");
  detail::require_unit_open(epsilon, "epsilon");
  return (n - 1.0) * std::pow(epsilon, -2.0 / m);
}

struct ComplexityPair {
  double shallow = 0.0;
  double deep = 0.0;
};

/// N_s = eps^(-n/min m_v), N_d = sum_v eps^(-d_v/m_v). One smoothness per
/// graph node, in the graph's node order.
inline ComplexityPair dag_complexity(const FunctionGraph& graph, std::span<const double> m_v, double epsilon) {
  if (m_v.size() != graph.node_count()) {
    throw ValidationError("dag_complexity: " + std::to_string(m_v.size()) + " smoothness values for " +
                          std::to_string(graph.node_count()) + " nodes");
  }
  detail::require_unit_open(epsilon, "epsilon");
  double m_min = std::numeric_limits<double>::infinity();
  double deep = 0.0;
  for (std::size_t v = 0; v < m_v.size(); ++v) {
    detail::require_positive(m_v[v], "m_v");
    m_min = std::min(m_min, m_v[v]);
    deep += std::pow(epsilon, -static_cast<double>(graph.nodes()[v].in_edges.size()) / m_v[v]);
  }
  return {std::pow(epsilon, -graph.n_inputs() / m_min), deep};
}

/// N_s = (eps/L)^(-n), N_d = (n - 1)(eps/L)^(-2)
inline ComplexityPair lipschitz_complexity(double n, double lipschitz, double epsilon) {
  if (!(n >= 2.0)) throw ValidationError("lipschitz complexity needs n >= 2");
  detail::require_positive(lipschitz, "L");
  detail::require_unit_open(epsilon, "epsilon");
  const double r = epsilon / lipschitz;
  return {std::pow(r, -n), (n - 1.0) * std::pow(r, -2.0)};
}

struct GapBounds {
  double shallow_lower = 0.0;  // 2^(-N/(n-1))
  double deep_upper = 0.0;     // N^(-4/n)
};

inline GapBounds gap_bounds(double units, double n) {
  if (!(units >= 1.0)) throw ValidationError("gap bounds need N >= 1");
  if (!(n >= 2.0)) throw ValidationError("gap bounds need n >= 2");
  return {std::exp2(-units / (n - 1.0)), std::pow(units, -4.0 / n)};
}

/// Smallest N beyond which the shallow lower bound never exceeds the deep
/// upper bound. log(lower/upper) = -N ln2/(n-1) + (4/n) ln N is concave with
/// its peak at N* = 4(n-1)/(n ln2); past the peak it falls monotonically.
inline double gap_crossover(double n) {
  if (!(n >= 2.0)) throw ValidationError("gap crossover needs n >= 2");
  auto f = [n](double N) { return -N * std::log(2.0) / (n - 1.0) + (4.0 / n) * std::log(N); };
  const double peak = std::max(1.0, 4.0 * (n - 1.0) / (n * std::log(2.0)));
  if (f(peak) <= 0.0) return 1.0;
  double lo = peak, hi = 2.0 * peak;
  while (f(hi) > 0.0) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return hi;
}

/// n/m for the full class, 2/m for binary-tree compositions.
inline double effective_dimension(double n, double m, bool compositional) {
  detail::require_positive(n, "n");
  detail::require_positive(m, "m");
  return (compositional ? std::min(2.0, n) : n) / m;
}

using uint128 = unsigned __int128;

inline std::string to_string(uint128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return s;
}

inline uint128 checked_mul(uint128 a, uint128 b) {
  if (a != 0 && b > std::numeric_limits<uint128>::max() / a) {
    throw std::overflow_error("binomial coefficient exceeds 128 bits");
  }
  return a * b;
}

namespace detail {

inline uint128 gcd128(uint128 a, uint128 b) {
  while (b != 0) {
    const uint128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace detail

/// C(n, k), exact. Each step divides out gcd(c, i) first, so an overflow is
/// reported only when the result itself (or C(n-k+i, i) on the way) does
/// not fit.
inline uint128 binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  uint128 c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    const uint128 g = detail::gcd128(c, i);
    c = checked_mul(c / g, static_cast<uint128>(n - k + i) / (i / g));
  }
  return c;
}

struct MonomialCounts {
  uint128 shallow = 0;  // C(n+k, k)
  uint128 tree = 0;     // (n-1) C(2+k, 2)
};

inline MonomialCounts monomial_counts(std::uint64_t n, std::uint64_t k) {
  if (n < 1 || k < 1) throw ValidationError("monomial counts need n, k >= 1");
  return {binomial(n + k, k), checked_mul(n - 1, binomial(2 + k, 2))};
}

struct GeneralizationQuery {
  double M = 1e4;             // samples
  double epsilon_G = 0.1;     // generalization accuracy
  double delta = 0.1;         // confidence
  double k_bits = 32;         // bits per weight
  double W = 1000;            // weights
  double n = 8;               // input dimension
  double m = 2;               // smoothness
  double epsilon = 0.1;       // approximation accuracy

  void validate() const {
    detail::require_positive(M, "M");
    detail::require_unit_open(epsilon_G, "epsilon_G");
    detail::require_unit_open(delta, "delta");
    detail::require_positive(k_bits, "k_bits");
    detail::require_positive(W, "W");
    detail::require_positive(n, "n");
    detail::require_positive(m, "m");
    detail::require_unit_open(epsilon, "epsilon");
  }
};

/// Values alongside log10 forms; the log10 form is always finite even when
/// the value itself under- or overflows.
struct GeneralizationSuite {
  double sample_bound = 0.0;             // 2/eps_G^2 (k W ln2 + ln(2/delta))
  double log10_sample_ratio = 0.0;       // log10(eps^n), M_deep / M_shallow
  double sample_ratio = 0.0;
  double r_shallow = 0.0, log10_r_shallow = 0.0;  // (sqrt(M)/n)^(n/(m+n))
  double r_deep = 0.0, log10_r_deep = 0.0;        // sqrt(M)^(2/(m+2))
  double err_shallow = 0.0, log10_err_shallow = 0.0;  // (n/sqrt(M))^(m/(m+n))
  double err_deep = 0.0, log10_err_deep = 0.0;        // (1/sqrt(M))^(m/(m+2))
};

inline GeneralizationSuite generalization_suite(const GeneralizationQuery& q) {
  q.validate();
  GeneralizationSuite s;
  s.sample_bound = 2.0 / (q.epsilon_G * q.epsilon_G) *
                   (q.k_bits * q.W * std::log(2.0) + std::log(2.0 / q.delta));
  s.log10_sample_ratio = q.n * std::log10(q.epsilon);
  s.sample_ratio = std::pow(10.0, s.log10_sample_ratio);
  const double log10_root_m = 0.5 * std::log10(q.M);
  s.log10_r_shallow = (q.n / (q.m + q.n)) * (log10_root_m - std::log10(q.n));
  s.log10_r_deep = (2.0 / (q.m + 2.0)) * log10_root_m;
  s.log10_err_shallow = (q.m / (q.m + q.n)) * (std::log10(q.n) - log10_root_m);
  s.log10_err_deep = -(q.m / (q.m + 2.0)) * log10_root_m;
  s.r_shallow = std::pow(10.0, s.log10_r_shallow);
  s.r_deep = std::pow(10.0, s.log10_r_deep);
  s.err_shallow = std::pow(10.0, s.log10_err_shallow);
  s.err_deep = std::pow(10.0, s.log10_err_deep);
  return s;
}

struct HvqMemory {
  std::uint64_t vq = 0;   // 4N
  std::uint64_t hvq = 0;  // 2(N/2) + 8
};

inline HvqMemory hvq_memory(std::uint64_t length) {
  if (length == 0 || length % 2 != 0) throw ValidationError("hvq memory needs an even vector length >= 2");
  return {4 * length, length + 8};
}

// ---------------------------------------------------------------------------
// Table output
// ---------------------------------------------------------------------------

struct BoundsRow {
  std::string formula;
  std::string inputs;
  double value = 0.0;
  double log10_value = 0.0;
};

inline BoundsRow make_row(std::string formula, std::string inputs, double value) {
  return {std::move(formula), std::move(inputs), value, std::log10(value)};
}

struct BoundsQuery {
  double n = 8, m = 2, epsilon = 0.1, L = 1.0;
  double N = 20;
  std::uint64_t k_degree = 2;
  std::uint64_t hvq_length = 100;
  GeneralizationQuery generalization;
};

/// One row per formula for a single query point.
inline std::vector<BoundsRow> bounds_table(const BoundsQuery& q) {
  std::vector<BoundsRow> rows;
  const std::string nme = "n=" + format_short(q.n) + ";m=" + format_short(q.m) + ";eps=" + format_short(q.epsilon);
  rows.push_back(make_row("shallow_complexity", nme, shallow_complexity(q.n, q.m, q.epsilon)));
  rows.push_back(make_row("deep_complexity", nme, deep_complexity(q.n, q.m, q.epsilon)));
  const std::string nle = "n=" + format_short(q.n) + ";L=" + format_short(q.L) + ";eps=" + format_short(q.epsilon);
  const auto lip = lipschitz_complexity(q.n, q.L, q.epsilon);
  rows.push_back(make_row("lipschitz_shallow", nle, lip.shallow));
  rows.push_back(make_row("lipschitz_deep", nle, lip.deep));
  const std::string nn = "N=" + format_short(q.N) + ";n=" + format_short(q.n);
  const auto gap = gap_bounds(q.N, q.n);
  rows.push_back(make_row("gap_shallow_lower", nn, gap.shallow_lower));
  rows.push_back(make_row("gap_deep_upper", nn, gap.deep_upper));
  rows.push_back(make_row("gap_crossover", "n=" + format_short(q.n), gap_crossover(q.n)));
  const std::string nm = "n=" + format_short(q.n) + ";m=" + format_short(q.m);
  rows.push_back(make_row("effective_dimension_full", nm, effective_dimension(q.n, q.m, false)));
  rows.push_back(make_row("effective_dimension_compositional", nm, effective_dimension(q.n, q.m, true)));
  const auto counts = monomial_counts(static_cast<std::uint64_t>(q.n), q.k_degree);
  const std::string nk = "n=" + format_short(q.n) + ";k=" + std::to_string(q.k_degree);
  rows.push_back(make_row("monomials_shallow", nk, static_cast<double>(counts.shallow)));
  rows.push_back(make_row("monomials_tree", nk, static_cast<double>(counts.tree)));
  const auto& g = q.generalization;
  const auto s = generalization_suite(g);
  const std::string gi = "M=" + format_short(g.M) + ";eps_G=" + format_short(g.epsilon_G) +
                         ";delta=" + format_short(g.delta) + ";k=" + format_short(g.k_bits) +
                         ";W=" + format_short(g.W) + ";n=" + format_short(g.n) + ";m=" +
                         format_short(g.m) + ";eps=" + format_short(g.epsilon);
  rows.push_back(make_row("sample_bound", gi, s.sample_bound));
  rows.push_back({"sample_ratio", gi, s.sample_ratio, s.log10_sample_ratio});
  rows.push_back({"r_shallow", gi, s.r_shallow, s.log10_r_shallow});
  rows.push_back({"r_deep", gi, s.r_deep, s.log10_r_deep});
  rows.push_back({"err_shallow", gi, s.err_shallow, s.log10_err_shallow});
  rows.push_back({"err_deep", gi, s.err_deep, s.log10_err_deep});
  const auto mem = hvq_memory(q.hvq_length);
  const std::string hl = "N=" + std::to_string(q.hvq_length);
  rows.push_back(make_row("vq_memory", hl, static_cast<double>(mem.vq)));
  rows.push_back(make_row("hvq_memory", hl, static_cast<double>(mem.hvq)));
  return rows;
}

/// "formula,inputs,value,log10_value"; inputs are ';'-separated key=value.
inline void write_bounds_csv(std::ostream& out, std::span<const BoundsRow> rows) {
  out << "formula,inputs,value,log10_value\n";
  for (const auto& r : rows) {
    out << r.formula << ',' << r.inputs << ',' << format_double(r.value) << ',' << format_double(r.log10_value)
        << '\n';
  }
}

}  // namespace compnet

#endif  // COMPNET_BOUNDS_HPP_
