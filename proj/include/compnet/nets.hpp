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

// Shallow ridge networks and binary-tree hierarchical networks: parameter
// bookkeeping, seeded initialisation, forward passes and MSE gradients.

#ifndef COMPNET_NETS_HPP_
#define COMPNET_NETS_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "compnet/compfn.hpp"
#include "compnet/error.hpp"
#include "compnet/format.hpp"
#include "compnet/rng.hpp"

namespace compnet {

enum class Activation { kReLU, kSoftplus, kAbs };

inline double activate(Activation act, double t) {
  switch (act) {
    case Activation::kReLU:
      return t > 0.0 ? t : 0.0;
    case Activation::kSoftplus:
      // ln(1 + e^t) without overflow for large t.
      return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    case Activation::kAbs:
      return std::abs(t);
  }
  return 0.0;
}

// Subgradient 0 at the ReLU and |.| kinks.
inline double activate_derivative(Activation act, double t) {
  switch (act) {
    case Activation::kReLU:
      return t > 0.0 ? 1.0 : 0.0;
    case Activation::kSoftplus:
      return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    case Activation::kAbs:
      return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

inline std::string to_string(Activation act) {
  switch (act) {
    case Activation::kReLU:
      return "relu";
    case Activation::kSoftplus:
      return "softplus";
    case Activation::kAbs:
      return "abs";
  }
  return "?";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kReLU;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "abs") return Activation::kAbs;
  throw ValidationError("unknown activation '" + name + "' (expected relu, softplus or abs)");
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// x -> sum_k a_k * sigma(<w_k, x> + b_k).
///
/// Parameters live in one flat vector: the N x n weight matrix row by row,
/// then the N biases, then the N output coefficients.
struct ShallowNet {
  int n_inputs = 0;
  int units = 0;
  Activation activation = Activation::kReLU;
  std::vector<double> params;

  std::size_t weight_offset() const { return 0; }
  std::size_t bias_offset() const { return static_cast<std::size_t>(units) * n_inputs; }
  std::size_t coeff_offset() const { return bias_offset() + units; }

  double& weight(int unit, int input) { return params[unit * n_inputs + input]; }
  double weight(int unit, int input) const { return params[unit * n_inputs + input]; }
  double& bias(int unit) { return params[bias_offset() + unit]; }
  double bias(int unit) const { return params[bias_offset() + unit]; }
  double& coeff(int unit) { return params[coeff_offset() + unit]; }
  double coeff(int unit) const { return params[coeff_offset() + unit]; }

  bool operator==(const ShallowNet&) const = default;
};

/// Binary-tree network over n = 2^l inputs paired as (x0,x1), (x2,x3), ...
///
/// Every one of the n-1 nodes holds Q ridge units on its two inputs and emits
/// one scalar: sum_q a_q * sigma(w1_q u + w2_q v + b_q). A parameter block is
/// [W (Q x 2, row by row), b (Q), a (Q)]. Without sharing there is one block
/// per node (level-major order, left to right); with sharing one per level.
struct TreeNet {
  int n_inputs = 0;
  int units_per_node = 0;
  bool weight_sharing = false;
  Activation activation = Activation::kReLU;
  std::vector<double> params;

  int levels() const { return log2_exact(n_inputs); }
  int node_count() const { return n_inputs - 1; }
  int nodes_in_level(int level) const { return n_inputs >> (level + 1); }
  int block_count() const { return weight_sharing ? levels() : node_count(); }
  std::size_t block_size() const { return 4 * static_cast<std::size_t>(units_per_node); }

  int block_index(int level, int position) const {
    if (weight_sharing) return level;
    int first = 0;
    for (int l = 0; l < level; ++l) first += nodes_in_level(l);
    return first + position;
  }
  const double* block(int level, int position) const {
    return params.data() + block_index(level, position) * block_size();
  }
  double* block(int level, int position) {
    return params.data() + block_index(level, position) * block_size();
  }

  bool operator==(const TreeNet&) const = default;
};

using Network = std::variant<ShallowNet, TreeNet>;

// ---------------------------------------------------------------------------
// Parameter bookkeeping
// ---------------------------------------------------------------------------

inline std::size_t param_count(const ShallowNet& net) {
  return static_cast<std::size_t>(net.n_inputs + 2) * net.units;
}

inline std::size_t param_count(const TreeNet& net) {
  return 4 * static_cast<std::size_t>(net.units_per_node) * net.block_count();
}

inline std::size_t param_count(const Network& net) {
  return std::visit([](const auto& n) { return param_count(n); }, net);
}

inline std::size_t tree_param_count(int n_inputs, int units_per_node, bool sharing) {
  const int blocks = sharing ? log2_exact(n_inputs) : n_inputs - 1;
  return 4 * static_cast<std::size_t>(units_per_node) * blocks;
}

struct BudgetMatch {
  std::size_t tree_params = 0;
  int shallow_units = 0;
  std::size_t shallow_params = 0;
  double ratio = 0.0;  // shallow_params / tree_params
};

/// Largest shallow width whose (n+2)N parameters fit in the tree's budget.
inline BudgetMatch match_budget(int n_inputs, int units_per_node, bool sharing) {
  if (units_per_node < 1) throw ValidationError("tree units per node must be >= 1");
  if (n_inputs < 2 || !is_power_of_two(n_inputs)) {
    throw ValidationError("tree networks need n_inputs = 2^l, l >= 1");
  }
  BudgetMatch match;
  match.tree_params = tree_param_count(n_inputs, units_per_node, sharing);
  match.shallow_units = static_cast<int>(match.tree_params / (n_inputs + 2));
  if (match.shallow_units < 1) {
    throw ValidationError("tree budget of " + std::to_string(match.tree_params) +
                          " parameters is smaller than one shallow unit (" +
                          std::to_string(n_inputs + 2) + ")");
  }
  match.shallow_params = static_cast<std::size_t>(n_inputs + 2) * match.shallow_units;
  match.ratio = static_cast<double>(match.shallow_params) / static_cast<double>(match.tree_params);
  return match;
}

// ---------------------------------------------------------------------------
// Initialisation
// ---------------------------------------------------------------------------

struct NetSpec {
  enum class Kind { kShallow, kTree };
  Kind kind = Kind::kShallow;
  int n_inputs = 0;
  int units = 0;  // N for shallow, Q per node for trees
  bool weight_sharing = false;
  Activation activation = Activation::kReLU;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. The output
/// coefficients count as a layer whose fan-in is the number of units feeding it.
inline Network init(const NetSpec& spec, std::uint64_t seed) {
  if (spec.units < 1 || spec.n_inputs < 1) throw ValidationError("networks need positive sizes");
  Rng rng(seed);
  auto draw = [&rng](double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    return rng.uniform(-bound, bound);
  };
  if (spec.kind == NetSpec::Kind::kShallow) {
    ShallowNet net{spec.n_inputs, spec.units, spec.activation, {}};
    net.params.assign(param_count(net), 0.0);
    for (std::size_t i = 0; i < net.bias_offset(); ++i) net.params[i] = draw(spec.n_inputs);
    for (int k = 0; k < net.units; ++k) net.coeff(k) = draw(net.units);
    return net;
  }
  if (spec.n_inputs < 2 || !is_power_of_two(spec.n_inputs)) {
    throw ValidationError("tree networks need n_inputs = 2^l, l >= 1");
  }
  TreeNet net{spec.n_inputs, spec.units, spec.weight_sharing, spec.activation, {}};
  net.params.assign(param_count(net), 0.0);
  const int q = net.units_per_node;
  for (int b = 0; b < net.block_count(); ++b) {
    double* block = net.params.data() + b * net.block_size();
    for (int i = 0; i < 2 * q; ++i) block[i] = draw(2.0);
    for (int i = 0; i < q; ++i) block[3 * q + i] = draw(q);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

inline double node_output(const double* block, int q, Activation act, double u, double v) {
  double sum = 0.0;
  for (int i = 0; i < q; ++i) {
    sum += block[3 * q + i] * activate(act, block[2 * i] * u + block[2 * i + 1] * v + block[2 * q + i]);
  }
  return sum;
}

inline double forward(const ShallowNet& net, std::span<const double> x) {
  if (static_cast<int>(x.size()) != net.n_inputs) {
    throw ValidationError("forward: expected " + std::to_string(net.n_inputs) + " inputs, got " +
                          std::to_string(x.size()));
  }
  double sum = 0.0;
  for (int k = 0; k < net.units; ++k) {
    double z = net.bias(k);
    for (int j = 0; j < net.n_inputs; ++j) z += net.weight(k, j) * x[j];
    sum += net.coeff(k) * activate(net.activation, z);
  }
  return sum;
}

inline double forward(const TreeNet& net, std::span<const double> x) {
  if (static_cast<int>(x.size()) != net.n_inputs) {
    throw ValidationError("forward: expected " + std::to_string(net.n_inputs) + " inputs, got " +
                          std::to_string(x.size()));
  }
  std::vector<double> values(x.begin(), x.end());
  for (int level = 0; level < net.levels(); ++level) {
    std::vector<double> next(net.nodes_in_level(level));
    for (int p = 0; p < net.nodes_in_level(level); ++p) {
      next[p] = node_output(net.block(level, p), net.units_per_node, net.activation,
                            values[2 * p], values[2 * p + 1]);
    }
    values = std::move(next);
  }
  return values.front();
}

inline double forward(const Network& net, std::span<const double> x) {
  return std::visit([x](const auto& n) { return forward(n, x); }, net);
}

inline int n_inputs_of(const Network& net) {
  return std::visit([](const auto& n) { return n.n_inputs; }, net);
}

inline std::vector<double>& params_of(Network& net) {
  return std::visit([](auto& n) -> std::vector<double>& { return n.params; }, net);
}
inline const std::vector<double>& params_of(const Network& net) {
  return std::visit([](const auto& n) -> const std::vector<double>& { return n.params; }, net);
}

namespace detail {

inline Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::kReLU:
      return z.cwiseMax(0.0);
    case Activation::kAbs:
      return z.cwiseAbs();
    case Activation::kSoftplus:
      return z.unaryExpr([](double t) { return activate(Activation::kSoftplus, t); });
  }
  return z;
}

inline Eigen::MatrixXd activation_derivative(Activation act, const Eigen::MatrixXd& z) {
  return z.unaryExpr([act](double t) { return activate_derivative(act, t); });
}

inline Eigen::MatrixXd gather_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.n_inputs);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = data.row(rows[r]);
    for (int j = 0; j < data.n_inputs; ++j) x(static_cast<Eigen::Index>(r), j) = src[j];
  }
  return x;
}

// Cached activations for one batch, needed by the backward pass.
struct ShallowTape {
  Eigen::MatrixXd pre;  // B x N
  Eigen::MatrixXd hidden;
  Eigen::VectorXd out;
};

inline ShallowTape shallow_forward(const ShallowNet& net, const Eigen::MatrixXd& x) {
  Eigen::Map<const RowMatrix> w(net.params.data(), net.units, net.n_inputs);
  Eigen::Map<const Eigen::VectorXd> b(net.params.data() + net.bias_offset(), net.units);
  Eigen::Map<const Eigen::VectorXd> a(net.params.data() + net.coeff_offset(), net.units);
  ShallowTape tape;
  tape.pre = x * w.transpose();
  tape.pre.rowwise() += b.transpose();
  tape.hidden = apply_activation(net.activation, tape.pre);
  tape.out = tape.hidden * a;
  return tape;
}

struct TreeNodeTape {
  Eigen::MatrixXd inputs;  // B x 2
  Eigen::MatrixXd pre;     // B x Q
  Eigen::MatrixXd hidden;
};

struct TreeTape {
  std::vector<std::vector<TreeNodeTape>> levels;
  Eigen::VectorXd out;
};

inline TreeTape tree_forward(const TreeNet& net, const Eigen::MatrixXd& x) {
  const int q = net.units_per_node;
  TreeTape tape;
  Eigen::MatrixXd values = x;  // B x width
  for (int level = 0; level < net.levels(); ++level) {
    const int width = net.nodes_in_level(level);
    Eigen::MatrixXd next(x.rows(), width);
    auto& nodes = tape.levels.emplace_back(width);
    for (int p = 0; p < width; ++p) {
      const double* block = net.block(level, p);
      Eigen::Map<const RowMatrix> w(block, q, 2);
      Eigen::Map<const Eigen::VectorXd> b(block + 2 * q, q);
      Eigen::Map<const Eigen::VectorXd> a(block + 3 * q, q);
      auto& node = nodes[p];
      node.inputs = values.middleCols(2 * p, 2);
      node.pre = node.inputs * w.transpose();
      node.pre.rowwise() += b.transpose();
      node.hidden = apply_activation(net.activation, node.pre);
      next.col(p) = node.hidden * a;
    }
    values = std::move(next);
  }
  tape.out = values.col(0);
  return tape;
}

inline Eigen::VectorXd forward_batch(const Network& net, const Eigen::MatrixXd& x) {
  if (const auto* s = std::get_if<ShallowNet>(&net)) return shallow_forward(*s, x).out;
  return tree_forward(std::get<TreeNet>(net), x).out;
}

}  // namespace detail

/// Predictions for every row of `data`, computed in fixed-size chunks.
inline std::vector<double> predict(const Network& net, const Dataset& data) {
  if (data.n_inputs != n_inputs_of(net)) throw ValidationError("dataset/net dimension mismatch");
  constexpr std::size_t kChunk = 2048;
  std::vector<double> out(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    rows.resize(end - start);
    for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
    const Eigen::VectorXd y = detail::forward_batch(net, detail::gather_rows(data, rows));
    for (std::size_t i = start; i < end; ++i) out[i] = y(static_cast<Eigen::Index>(i - start));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct LossGradient {
  double loss = 0.0;              // mean squared error over the batch
  std::vector<double> gradient;  // d loss / d params, same layout as params
};

/// MSE and its gradient over the rows `batch` of `data`, by reverse accumulation.
inline LossGradient gradient(const Network& net, const Dataset& data,
                             std::span<const std::size_t> batch) {
  if (batch.empty()) throw ValidationError("gradient needs a nonempty batch");
  if (data.n_inputs != n_inputs_of(net)) throw ValidationError("dataset/net dimension mismatch");
  const Eigen::MatrixXd x = detail::gather_rows(data, batch);
  const auto rows = static_cast<Eigen::Index>(batch.size());
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) y(r) = data.targets[batch[r]];

  LossGradient result;
  result.gradient.assign(param_count(net), 0.0);

  if (const auto* shallow = std::get_if<ShallowNet>(&net)) {
    const auto tape = detail::shallow_forward(*shallow, x);
    const Eigen::VectorXd residual = tape.out - y;
    result.loss = residual.squaredNorm() / static_cast<double>(rows);
    const Eigen::VectorXd d_out = residual * (2.0 / static_cast<double>(rows));
    Eigen::Map<const Eigen::VectorXd> a(shallow->params.data() + shallow->coeff_offset(),
                                        shallow->units);
    double* g = result.gradient.data();
    Eigen::Map<RowMatrix> g_w(g, shallow->units, shallow->n_inputs);
    Eigen::Map<Eigen::VectorXd> g_b(g + shallow->bias_offset(), shallow->units);
    Eigen::Map<Eigen::VectorXd> g_a(g + shallow->coeff_offset(), shallow->units);
    g_a = tape.hidden.transpose() * d_out;
    const Eigen::MatrixXd d_pre =
        (d_out * a.transpose()).cwiseProduct(detail::activation_derivative(shallow->activation, tape.pre));
    g_w = d_pre.transpose() * x;
    g_b = d_pre.colwise().sum().transpose();
    return result;
  }

  const auto& tree = std::get<TreeNet>(net);
  const int q = tree.units_per_node;
  const auto tape = detail::tree_forward(tree, x);
  const Eigen::VectorXd residual = tape.out - y;
  result.loss = residual.squaredNorm() / static_cast<double>(rows);
  Eigen::MatrixXd d_values = residual * (2.0 / static_cast<double>(rows));  // B x 1
  for (int level = tree.levels() - 1; level >= 0; --level) {
    const int width = tree.nodes_in_level(level);
    Eigen::MatrixXd d_inputs(rows, 2 * width);
    for (int p = 0; p < width; ++p) {
      const auto& node = tape.levels[level][p];
      const double* block = tree.block(level, p);
      Eigen::Map<const RowMatrix> w(block, q, 2);
      Eigen::Map<const Eigen::VectorXd> a(block + 3 * q, q);
      double* g = result.gradient.data() + tree.block_index(level, p) * tree.block_size();
      Eigen::Map<RowMatrix> g_w(g, q, 2);
      Eigen::Map<Eigen::VectorXd> g_b(g + 2 * q, q);
      Eigen::Map<Eigen::VectorXd> g_a(g + 3 * q, q);
      const Eigen::VectorXd d_out = d_values.col(p);
      g_a += node.hidden.transpose() * d_out;
      const Eigen::MatrixXd d_pre =
          (d_out * a.transpose()).cwiseProduct(detail::activation_derivative(tree.activation, node.pre));
      g_w += d_pre.transpose() * node.inputs;
      g_b += d_pre.colwise().sum().transpose();
      d_inputs.middleCols(2 * p, 2) = d_pre * w;
    }
    d_values = std::move(d_inputs);
  }
  return result;
}

inline LossGradient gradient(const Network& net, const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return gradient(net, data, rows);
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

/// Two '#' header lines describing the topology, then "index,value" rows.
inline void write_net_csv(std::ostream& out, const Network& net) {
  out << "# compnet-net v1\n";
  if (const auto* s = std::get_if<ShallowNet>(&net)) {
    out << "# kind=shallow n_inputs=" << s->n_inputs << " units=" << s->units
        << " activation=" << to_string(s->activation) << '\n';
  } else {
    const auto& t = std::get<TreeNet>(net);
    out << "# kind=tree n_inputs=" << t.n_inputs << " units_per_node=" << t.units_per_node
        << " sharing=" << (t.weight_sharing ? 1 : 0) << " activation=" << to_string(t.activation)
        << '\n';
  }
  out << "index,value\n";
  const auto& params = params_of(net);
  for (std::size_t i = 0; i < params.size(); ++i) out << i << ',' << format_double(params[i]) << '\n';
}

inline Network read_net_csv(std::istream& in) {
  std::string line;
  // Skip provenance lines written ahead of the net header.
  while (std::getline(in, line) && line.rfind("# compnet ", 0) == 0) {
  }
  if (trim(line) != "# compnet-net v1") throw ValidationError("not a compnet net file");
  std::getline(in, line);
  std::map<std::string, std::string> fields;
  for (const auto& token : split(trim(line.substr(1)), ' ')) {
    const auto eq = token.find('=');
    if (eq != std::string::npos) fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  auto field = [&fields](const std::string& key) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ValidationError("net header is missing '" + key + "'");
    return it->second;
  };
  Network net;
  if (field("kind") == "shallow") {
    net = ShallowNet{std::stoi(field("n_inputs")), std::stoi(field("units")),
                     parse_activation(field("activation")), {}};
  } else if (field("kind") == "tree") {
    net = TreeNet{std::stoi(field("n_inputs")), std::stoi(field("units_per_node")),
                  field("sharing") == "1", parse_activation(field("activation")), {}};
  } else {
    throw ValidationError("unknown net kind '" + field("kind") + "'");
  }
  std::getline(in, line);
  if (trim(line) != "index,value") throw ValidationError("net CSV is missing the index,value header");
  auto& params = params_of(net);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 2 || std::stoul(cells[0]) != params.size()) {
      throw ValidationError("net CSV rows must be consecutive index,value pairs");
    }
    params.push_back(std::strtod(cells[1].c_str(), nullptr));
  }
  if (params.size() != param_count(net)) {
    throw ValidationError("net CSV has " + std::to_string(params.size()) + " parameters, topology needs " +
                          std::to_string(param_count(net)));
  }
  return net;
}

}  // namespace compnet

#endif  // COMPNET_NETS_HPP_
