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

// Config-driven experiment runner: INI configs, shallow-vs-tree comparisons,
// canned figure reproductions, constructive gadget reports and provenance-
// stamped CSV output.

#ifndef COMPNET_EXPERIMENT_HPP_
#define COMPNET_EXPERIMENT_HPP_

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "compnet/bounds.hpp"
#include "compnet/compfn.hpp"
#include "compnet/construct.hpp"
#include "compnet/error.hpp"
#include "compnet/format.hpp"
#include "compnet/nets.hpp"
#include "compnet/rng.hpp"
#include "compnet/train.hpp"

namespace compnet {

inline constexpr const char* kToolkitVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

struct TargetSpec {
  enum class Kind { kTree, kDag, kReluSum };
  Kind kind = Kind::kTree;
  int n_inputs = 8;
  std::vector<ConstituentFn> level_fns;  // kTree
  std::vector<NodeSpec> nodes;           // kDag
  int relu_units = 100;                  // kReluSum
  std::uint64_t target_seed = 0;         // kReluSum
};

/// sum_i c_i (<w_i, x> + b_i)_+ with w_i ~ U[-1,1]^n, b_i ~ U[-1,1] and
/// c_i ~ N(0, 1/units), all drawn from Rng(seed).
inline ShallowNet relu_sum_target(int n_inputs, int units, std::uint64_t seed) {
  if (units < 1 || n_inputs < 1) throw ValidationError("relu sum target needs positive sizes");
  ShallowNet net{n_inputs, units, Activation::kReLU, {}};
  net.params.assign(param_count(net), 0.0);
  Rng rng(seed);
  for (int k = 0; k < units; ++k) {
    for (int j = 0; j < n_inputs; ++j) net.weight(k, j) = rng.uniform(-1, 1);
    net.bias(k) = rng.uniform(-1, 1);
    net.coeff(k) = rng.normal() / std::sqrt(static_cast<double>(units));
  }
  return net;
}

class Target {
 public:
  explicit Target(const TargetSpec& spec) {
    switch (spec.kind) {
      case TargetSpec::Kind::kTree:
        impl_ = build_binary_tree(spec.n_inputs, spec.level_fns);
        break;
      case TargetSpec::Kind::kDag:
        impl_ = build_dag(spec.nodes, spec.n_inputs);
        break;
      case TargetSpec::Kind::kReluSum:
        impl_ = relu_sum_target(spec.n_inputs, spec.relu_units, spec.target_seed);
        break;
    }
  }

  int n_inputs() const {
    if (const auto* g = std::get_if<FunctionGraph>(&impl_)) return g->n_inputs();
    return std::get<ShallowNet>(impl_).n_inputs;
  }
  double operator()(std::span<const double> x) const {
    if (const auto* g = std::get_if<FunctionGraph>(&impl_)) return g->evaluate(x);
    return forward(std::get<ShallowNet>(impl_), x);
  }
  const FunctionGraph* graph() const { return std::get_if<FunctionGraph>(&impl_); }

 private:
  std::variant<FunctionGraph, ShallowNet> impl_;
};

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  TargetSpec target;

  std::size_t train_size = 10000;
  std::size_t test_size = 10000;
  double noise_sigma = 0.0;
  bool shuffle = false;
  std::uint64_t perm_seed = 0;
  std::uint64_t data_seed = 0;  // defaults derived from `seed`
  std::uint64_t test_seed = 0;

  int tree_units = 20;
  bool weight_sharing = false;
  Activation activation = Activation::kReLU;
  int shallow_units = 0;  // 0: budget matched

  int trials = 30;
  std::vector<Selection> selections = {Selection::kByTrain};
  double holdout_fraction = -1.0;
  int threads = 1;
  std::uint64_t search_seed = 0;
  SearchSpace space = [] {
    SearchSpace s;
    s.epochs = 60;
    return s;
  }();

  bool selects_by_validation() const {
    return std::find(selections.begin(), selections.end(), Selection::kByValidation) != selections.end();
  }
};

namespace detail {

inline std::string fn_list_to_string(const std::vector<ConstituentFn>& fns) {
  std::string out;
  for (std::size_t i = 0; i < fns.size(); ++i) out += (i ? "; " : "") + to_string(fns[i]);
  return out;
}

inline std::string source_to_string(const Source& s) {
  return (s.kind == Source::Kind::kInput ? "x" : "n") + std::to_string(s.index);
}

// "id <- src, src : fn" joined by ';'
inline std::string nodes_to_string(const std::vector<NodeSpec>& nodes) {
  std::string out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i) out += "; ";
    out += std::to_string(nodes[i].id) + " <- ";
    for (std::size_t e = 0; e < nodes[i].in_edges.size(); ++e) {
      out += (e ? ", " : "") + source_to_string(nodes[i].in_edges[e]);
    }
    out += " : " + to_string(nodes[i].fn);
  }
  return out;
}

// Splits on `delim` outside parentheses.
inline std::vector<std::string> split_top_level(const std::string& text, char delim) {
  std::vector<std::string> parts;
  std::string current;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == delim && depth == 0) {
      parts.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!trim(current).empty() || !parts.empty()) parts.push_back(trim(current));
  return parts;
}

inline std::vector<NodeSpec> parse_nodes(const std::string& text) {
  std::vector<NodeSpec> nodes;
  for (const auto& item : split_top_level(text, ';')) {
    const auto arrow = item.find("<-");
    const auto colon = item.find(':');
    if (arrow == std::string::npos || colon == std::string::npos || colon < arrow) {
      throw ValidationError("node '" + item + "' must read 'id <- src, src : fn'");
    }
    NodeSpec node;
    node.id = std::stoi(trim(item.substr(0, arrow)));
    for (const auto& src : split(trim(item.substr(arrow + 2, colon - arrow - 2)), ',')) {
      const std::string s = trim(src);
      if (s.size() < 2 || (s[0] != 'x' && s[0] != 'n')) {
        throw ValidationError("node source '" + s + "' must be xK (input) or nK (node)");
      }
      const int index = std::stoi(s.substr(1));
      node.in_edges.push_back(s[0] == 'x' ? Source::input(index) : Source::node(index));
    }
    node.fn = parse_fn(item.substr(colon + 1));
    nodes.push_back(std::move(node));
  }
  return nodes;
}

inline std::string kind_name(TargetSpec::Kind k) {
  switch (k) {
    case TargetSpec::Kind::kTree:
      return "tree";
    case TargetSpec::Kind::kDag:
      return "dag";
    case TargetSpec::Kind::kReluSum:
      return "non_compositional_relu_100";
  }
  return "";
}

}  // namespace detail

/// Canonical INI text: every field explicit, fixed key order. The config
/// hash is taken over this text.
inline std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[experiment]\nname = " << c.name << "\nseed = " << c.seed << "\noutput_dir = " << c.output_dir << "\n\n";
  o << "[target]\nkind = " << detail::kind_name(c.target.kind) << "\nn_inputs = " << c.target.n_inputs << '\n';
  if (c.target.kind == TargetSpec::Kind::kTree) o << "level_fns = " << detail::fn_list_to_string(c.target.level_fns) << '\n';
  if (c.target.kind == TargetSpec::Kind::kDag) o << "nodes = " << detail::nodes_to_string(c.target.nodes) << '\n';
  if (c.target.kind == TargetSpec::Kind::kReluSum) {
    o << "relu_units = " << c.target.relu_units << "\ntarget_seed = " << c.target.target_seed << '\n';
  }
  o << "\n[data]\ntrain_size = " << c.train_size << "\ntest_size = " << c.test_size
    << "\nnoise_sigma = " << format_double(c.noise_sigma) << "\nshuffle = " << (c.shuffle ? "true" : "false")
    << "\nperm_seed = " << c.perm_seed << "\ndata_seed = " << c.data_seed << "\ntest_seed = " << c.test_seed
    << "\n\n";
  o << "[architecture]\ntree_units = " << c.tree_units << "\nweight_sharing = " << (c.weight_sharing ? "true" : "false")
    << "\nactivation = " << to_string(c.activation) << "\nshallow_units = " << c.shallow_units << "\n\n";
  o << "[search]\ntrials = " << c.trials << "\nselection = ";
  for (std::size_t i = 0; i < c.selections.size(); ++i) o << (i ? ", " : "") << to_string(c.selections[i]);
  o << "\nholdout_fraction = " << format_double(c.holdout_fraction) << "\nthreads = " << c.threads
    << "\nsearch_seed = " << c.search_seed << "\nepochs = " << c.space.epochs << "\npatience = " << c.space.patience
    << "\nmin_improvement = " << format_double(c.space.min_improvement)
    << "\nstep_min = " << format_double(c.space.step_min) << "\nstep_max = " << format_double(c.space.step_max)
    << "\ndecay_min = " << format_double(c.space.decay_min) << "\ndecay_max = " << format_double(c.space.decay_max)
    << "\ndecay_every_min = " << c.space.decay_every_min << "\ndecay_every_max = " << c.space.decay_every_max
    << "\nbatch_sizes = ";
  for (std::size_t i = 0; i < c.space.batch_sizes.size(); ++i) o << (i ? ", " : "") << c.space.batch_sizes[i];
  o << '\n';
  return o.str();
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(to_ini(c)); }

/// Every semantic problem with a config, in a stable order. Empty means valid.
inline std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto check = [&errors](bool ok, std::string message) {
    if (!ok) errors.push_back(std::move(message));
  };
  const auto& t = c.target;
  check(t.n_inputs >= 1, "target.n_inputs must be >= 1");
  if (t.kind == TargetSpec::Kind::kTree) {
    try {
      build_binary_tree(t.n_inputs, t.level_fns);
    } catch (const ValidationError& e) {
      errors.push_back(std::string("target.level_fns: ") + e.what());
    }
  } else if (t.kind == TargetSpec::Kind::kDag) {
    try {
      build_dag(t.nodes, t.n_inputs);
    } catch (const ValidationError& e) {
      errors.push_back(std::string("target.nodes: ") + e.what());
    }
  } else {
    check(t.relu_units >= 1, "target.relu_units must be >= 1");
  }
  check(c.train_size >= 1, "data.train_size must be >= 1");
  check(c.test_size >= 1, "data.test_size must be >= 1");
  check(c.noise_sigma >= 0.0 && std::isfinite(c.noise_sigma), "data.noise_sigma must be finite and >= 0");
  check(c.tree_units >= 1, "architecture.tree_units must be >= 1");
  check(c.shallow_units >= 0, "architecture.shallow_units must be >= 0 (0 = budget matched)");
  const bool tree_ok = t.n_inputs >= 2 && is_power_of_two(t.n_inputs);
  check(tree_ok, "target.n_inputs must be a power of two >= 2 for the tree architecture");
  if (tree_ok && c.tree_units >= 1 && c.shallow_units == 0) {
    try {
      match_budget(t.n_inputs, c.tree_units, c.weight_sharing);
    } catch (const ValidationError& e) {
      errors.push_back(std::string("architecture: ") + e.what());
    }
  }
  if (tree_ok && t.n_inputs == 2 && !c.weight_sharing) {
    // One tree node over two inputs is itself a shallow net.
    const int shallow = c.shallow_units ? c.shallow_units : c.tree_units;
    check(shallow != c.tree_units, "architectures must differ: a 2-input tree with Q units is the shallow net with Q units");
  }
  check(c.trials >= 1, "search.trials must be >= 1");
  check(!c.selections.empty(), "search.selection must name at least one criterion");
  check(c.threads >= 1, "search.threads must be >= 1");
  check(c.holdout_fraction < 1.0, "search.holdout_fraction must be < 1");
  if (c.selects_by_validation()) {
    check(c.holdout_fraction != 0.0, "search.holdout_fraction must be > 0 when selecting by validation");
  }
  try {
    c.space.validate();
  } catch (const ValidationError& e) {
    errors.push_back(std::string("search: ") + e.what());
  }
  return errors;
}

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : ValidationError(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string out = "invalid config (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) out += "\n  - " + e;
    return out;
  }
  std::vector<std::string> errors_;
};

inline void validate(const ExperimentConfig& c) {
  auto errors = validation_errors(c);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

/// Fills derived seeds that were left at "unset" (0 with the key absent).
inline void derive_seeds(ExperimentConfig& c, bool data_set, bool test_set, bool search_set) {
  if (!data_set) c.data_seed = mix_seed(c.seed, 1);
  if (!test_set) c.test_seed = mix_seed(c.seed, 2);
  if (!search_set) c.search_seed = mix_seed(c.seed, 3);
}

/// Parses the INI schema documented in docs/config.md. Parse and semantic
/// problems are collected and thrown together as one ConfigError.
inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({std::string("malformed INI: ") + e.message() + " (line " + std::to_string(e.line()) + ")"});
  }
  static const std::map<std::string, std::set<std::string>> kSchema = {
      {"experiment", {"name", "seed", "output_dir"}},
      {"target", {"kind", "n_inputs", "level_fns", "nodes", "relu_units", "target_seed"}},
      {"data", {"train_size", "test_size", "noise_sigma", "shuffle", "perm_seed", "data_seed", "test_seed"}},
      {"architecture", {"tree_units", "weight_sharing", "activation", "shallow_units"}},
      {"search",
       {"trials", "selection", "holdout_fraction", "threads", "search_seed", "epochs", "patience",
        "min_improvement", "step_min", "step_max", "decay_min", "decay_max", "decay_every_min",
        "decay_every_max", "batch_sizes"}},
  };
  std::vector<std::string> errors;
  for (const auto& [section, body] : tree) {
    const auto it = kSchema.find(section);
    if (it == kSchema.end()) {
      errors.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, unused] : body) {
      if (!it->second.count(key)) errors.push_back("unknown key " + section + "." + key);
    }
  }

  auto raw = [&tree](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return trim(*v);
    return std::nullopt;
  };
  auto read = [&](const std::string& path, auto& field, auto convert) -> bool {
    const auto v = raw(path);
    if (!v) return false;
    try {
      field = convert(*v);
    } catch (const std::exception& e) {
      errors.push_back(path + ": cannot parse '" + *v + "' (" + e.what() + ")");
    }
    return true;
  };
  auto as_u64 = [](const std::string& s) {
    std::size_t used = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  };
  auto as_int = [](const std::string& s) {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  };
  auto as_size = [&as_u64](const std::string& s) { return static_cast<std::size_t>(as_u64(s)); };
  auto as_double = [](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  };
  auto as_bool = [](const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("expected true/false");
  };

  ExperimentConfig c;
  read("experiment.name", c.name, [](const std::string& s) { return s; });
  if (!read("experiment.seed", c.seed, as_u64)) errors.push_back("experiment.seed is required (no implicit entropy)");
  read("experiment.output_dir", c.output_dir, [](const std::string& s) { return s; });

  std::string kind = "tree";
  read("target.kind", kind, [](const std::string& s) { return s; });
  if (kind == "tree") {
    c.target.kind = TargetSpec::Kind::kTree;
    if (!read("target.level_fns", c.target.level_fns, [](const std::string& s) {
          std::vector<ConstituentFn> fns;
          for (const auto& part : detail::split_top_level(s, ';')) fns.push_back(parse_fn(part));
          return fns;
        })) {
      errors.push_back("target.level_fns is required for kind = tree");
    }
  } else if (kind == "dag") {
    c.target.kind = TargetSpec::Kind::kDag;
    if (!read("target.nodes", c.target.nodes, detail::parse_nodes)) {
      errors.push_back("target.nodes is required for kind = dag");
    }
  } else if (kind == "non_compositional_relu_100") {
    c.target.kind = TargetSpec::Kind::kReluSum;
    read("target.relu_units", c.target.relu_units, as_int);
    if (!read("target.target_seed", c.target.target_seed, as_u64)) {
      errors.push_back("target.target_seed is required for kind = non_compositional_relu_100");
    }
  } else {
    errors.push_back("target.kind must be tree, dag or non_compositional_relu_100, got '" + kind + "'");
  }
  if (!read("target.n_inputs", c.target.n_inputs, as_int)) errors.push_back("target.n_inputs is required");

  read("data.train_size", c.train_size, as_size);
  read("data.test_size", c.test_size, as_size);
  read("data.noise_sigma", c.noise_sigma, as_double);
  read("data.shuffle", c.shuffle, as_bool);
  if (!read("data.perm_seed", c.perm_seed, as_u64) && c.shuffle) {
    errors.push_back("data.perm_seed is required when data.shuffle = true");
  }
  const bool data_set = read("data.data_seed", c.data_seed, as_u64);
  const bool test_set = read("data.test_seed", c.test_seed, as_u64);

  read("architecture.tree_units", c.tree_units, as_int);
  read("architecture.weight_sharing", c.weight_sharing, as_bool);
  read("architecture.activation", c.activation, parse_activation);
  read("architecture.shallow_units", c.shallow_units, [&as_int](const std::string& s) {
    return s == "auto" ? 0 : as_int(s);
  });

  read("search.trials", c.trials, as_int);
  read("search.selection", c.selections, [](const std::string& s) {
    std::vector<Selection> out;
    for (const auto& part : split(s, ',')) out.push_back(parse_selection(trim(part)));
    return out;
  });
  read("search.holdout_fraction", c.holdout_fraction, as_double);
  read("search.threads", c.threads, as_int);
  const bool search_set = read("search.search_seed", c.search_seed, as_u64);
  read("search.epochs", c.space.epochs, as_int);
  read("search.patience", c.space.patience, as_int);
  read("search.min_improvement", c.space.min_improvement, as_double);
  read("search.step_min", c.space.step_min, as_double);
  read("search.step_max", c.space.step_max, as_double);
  read("search.decay_min", c.space.decay_min, as_double);
  read("search.decay_max", c.space.decay_max, as_double);
  read("search.decay_every_min", c.space.decay_every_min, as_int);
  read("search.decay_every_max", c.space.decay_every_max, as_int);
  read("search.batch_sizes", c.space.batch_sizes, [&as_int](const std::string& s) {
    std::vector<int> out;
    for (const auto& part : split(s, ',')) out.push_back(as_int(trim(part)));
    return out;
  });

  derive_seeds(c, data_set, test_set, search_set);
  for (auto& e : validation_errors(c)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

struct Provenance {
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::string command;

  std::string header() const {
    std::string out = "# compnet " + std::string(kToolkitVersion) + " command=" + command +
                      " config_hash=" + hex64(config_hash);
    for (const auto& [name, seed] : seeds) out += " " + name + "=" + std::to_string(seed);
    return out + "\n";
  }
};

inline Provenance provenance_for(const ExperimentConfig& c, std::string command) {
  return {config_hash(c),
          {{"seed", c.seed}, {"data_seed", c.data_seed}, {"test_seed", c.test_seed}, {"search_seed", c.search_seed},
           {"perm_seed", c.perm_seed}},
          std::move(command)};
}

/// Opens `path` for writing (creating parent directories) and writes the
/// provenance line first.
inline std::ofstream open_output(const std::filesystem::path& path, const Provenance& prov) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << prov.header();
  return out;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct DataBundle {
  Dataset train, test;
};

inline DataBundle make_data(const ExperimentConfig& c) {
  const Target target(c.target);
  DataBundle d{sample_dataset(target, target.n_inputs(), c.train_size, c.noise_sigma, c.data_seed),
               sample_dataset(target, target.n_inputs(), c.test_size, c.noise_sigma, c.test_seed)};
  if (c.shuffle) {
    d.train = shuffle_coordinates(d.train, c.perm_seed);
    d.test = shuffle_coordinates(d.test, c.perm_seed);
  }
  return d;
}

struct ArchResult {
  std::string name;  // "deep" or "shallow"
  NetSpec spec;
  std::size_t params = 0;
  SearchResult search;
  std::vector<std::pair<Selection, std::size_t>> best;  // one per configured selection

  std::size_t best_for(Selection s) const {
    for (const auto& [sel, idx] : best) {
      if (sel == s) return idx;
    }
    throw ValidationError("selection " + to_string(s) + " was not run");
  }
  const RunRecord& best_record(Selection s) const { return search.records[best_for(s)]; }
};

struct ComparisonReport {
  ExperimentConfig config;
  BudgetMatch budget;
  std::vector<ArchResult> archs;

  const ArchResult& arch(const std::string& name) const {
    for (const auto& a : archs) {
      if (a.name == name) return a;
    }
    throw ValidationError("no architecture '" + name + "'");
  }
  double best_test(const std::string& name, Selection s = Selection::kByTrain) const {
    return arch(name).best_record(s).final_test;
  }
};

inline std::vector<NetSpec> architectures(const ExperimentConfig& c, BudgetMatch* budget = nullptr) {
  const int n = c.target.n_inputs;
  BudgetMatch match;
  match.tree_params = tree_param_count(n, c.tree_units, c.weight_sharing);
  if (c.shallow_units == 0) {
    match = match_budget(n, c.tree_units, c.weight_sharing);
  } else {
    match.shallow_units = c.shallow_units;
    match.shallow_params = static_cast<std::size_t>(n + 2) * c.shallow_units;
    match.ratio = static_cast<double>(match.shallow_params) / static_cast<double>(match.tree_params);
  }
  if (budget) *budget = match;
  return {NetSpec{NetSpec::Kind::kTree, n, c.tree_units, c.weight_sharing, c.activation},
          NetSpec{NetSpec::Kind::kShallow, n, match.shallow_units, false, c.activation}};
}

inline ArchResult run_architecture(const ExperimentConfig& config, const DataBundle& data, const NetSpec& spec,
                                   std::string name) {
  SearchOptions opt;
  opt.trials = config.trials;
  opt.seed = config.search_seed;
  opt.threads = config.threads;
  opt.selection = config.selects_by_validation() ? Selection::kByValidation : Selection::kByTrain;
  opt.holdout_fraction = config.holdout_fraction;
  ArchResult arch;
  arch.name = std::move(name);
  arch.spec = spec;
  arch.params = param_count(init(spec, 0));
  arch.search = random_search(spec, data.train, data.test, config.space, opt);
  for (Selection s : config.selections) arch.best.emplace_back(s, select_best(arch.search.records, s));
  return arch;
}

/// One search per architecture over the same data and the same hyperparameter
/// draws. With several selection criteria the trials are shared and each
/// criterion picks its own winner from them.
inline ComparisonReport run_compare(const ExperimentConfig& config) {
  validate(config);
  ComparisonReport report;
  report.config = config;
  const auto data = make_data(config);
  const auto specs = architectures(config, &report.budget);
  report.archs.push_back(run_architecture(config, data, specs[0], "deep"));
  report.archs.push_back(run_architecture(config, data, specs[1], "shallow"));
  return report;
}

/// "epoch train_mse test_mse", whitespace separated, for plotting.
inline void write_plot_data(std::ostream& out, const RunRecord& record) {
  out << "# epoch train_mse test_mse\n";
  for (std::size_t e = 0; e < record.train_curve.size(); ++e) {
    out << e << ' ' << format_double(record.train_curve[e]) << ' ' << format_double(record.test_curve[e]) << '\n';
  }
}

inline void write_config(const std::filesystem::path& dir, const ExperimentConfig& config, const Provenance& prov) {
  auto out = open_output(dir / "config.ini", prov);
  out << to_ini(config);
}

/// Curves, summary, and per-selection plot data and net files for one
/// architecture. Appends its rows to `table` when given.
inline void write_architecture(const std::filesystem::path& dir, const ArchResult& arch, const ExperimentConfig& config,
                               const Provenance& prov, std::ostream* table = nullptr) {
  {
    auto out = open_output(dir / (arch.name + "_curves.csv"), prov);
    write_curves_csv(out, arch.search.records);
  }
  {
    auto out = open_output(dir / (arch.name + "_summary.csv"), prov);
    write_summary_csv(out, arch.search.records);
  }
  for (const auto& [sel, idx] : arch.best) {
    const auto& r = arch.search.records[idx];
    if (table) {
      const int units = arch.spec.kind == NetSpec::Kind::kTree ? arch.spec.units * (arch.spec.n_inputs - 1)
                                                               : arch.spec.units;
      *table << arch.name << ',' << units << ',' << arch.params << ',' << to_string(sel) << ',' << idx << ','
             << format_double(r.final_train) << ',' << format_double(r.final_val) << ','
             << format_double(r.final_test) << '\n';
    }
    const std::string suffix = config.selections.size() > 1 ? "_" + to_string(sel) : "";
    auto plot = open_output(dir / (arch.name + suffix + ".dat"), prov);
    write_plot_data(plot, r);
    auto net = open_output(dir / (arch.name + suffix + "_net.csv"), prov);
    write_net_csv(net, r.params);
  }
}

inline void write_comparison(const std::filesystem::path& dir, const ComparisonReport& report,
                             const std::string& command) {
  const auto prov = provenance_for(report.config, command);
  write_config(dir, report.config, prov);
  auto table = open_output(dir / "comparison.csv", prov);
  table << "architecture,units,params,selection,best_trial,final_train,final_val,final_test\n";
  for (const auto& arch : report.archs) write_architecture(dir, arch, report.config, prov, &table);
}

// ---------------------------------------------------------------------------
// Figure reproductions
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"fig3", "fig4", "fig5", "fig7", "fig8",
                                               "fig9", "fig10", "fig11", "fig12"};
  return ids;
}

inline std::vector<ConstituentFn> fig3_levels() { return {CosSum{0.59, 1.5}, QuadSum{1.1, -1.0}}; }
inline std::vector<ConstituentFn> fig7_levels() {
  return {CosSum{0.59, 1.5}, QuadSum{1.1, -1.0}, QuadSum{1.1, -1.0}};
}
inline std::vector<ConstituentFn> fig8_levels() {
  return {AffineQuad{0.7, 1.0, 2.0}, CubicAffine{0.6, 1.1, 1.9}, SqrtAffine{1.3, 1.2, 1.3}};
}
// Four-input trees of ReLU nodes with one or two units per node.
inline std::vector<ConstituentFn> relu_node_levels(int units_per_node) {
  if (units_per_node == 1) return {ReluCombo{{{0.9, -0.7, 0.2, 1.5}}}, ReluCombo{{{1.2, 0.8, -0.3, 1.0}}}};
  return {ReluCombo{{{0.9, -0.7, 0.2, 1.5}, {-0.6, 1.1, 0.1, 1.0}}},
          ReluCombo{{{1.2, 0.8, -0.3, 1.0}, {-0.9, 0.5, 0.4, -0.7}}}};
}

struct ReproOptions {
  std::uint64_t seed = 42;
  std::optional<int> trials;  // overrides the figure default
  std::optional<int> epochs;
  std::optional<std::size_t> samples;  // train and test size each
  bool paper_scale = false;
  int threads = 1;
};

/// Named configs making up one figure, e.g. {"unshuffled", ...}, {"shuffled", ...}.
inline std::vector<std::pair<std::string, ExperimentConfig>> figure_configs(const std::string& fig,
                                                                            const ReproOptions& opt) {
  ExperimentConfig base;
  base.name = fig;
  base.seed = opt.seed;
  base.threads = opt.threads;
  auto tree_target = [](int n, std::vector<ConstituentFn> levels) {
    TargetSpec t;
    t.kind = TargetSpec::Kind::kTree;
    t.n_inputs = n;
    t.level_fns = std::move(levels);
    return t;
  };
  bool small = false;  // 2K/2K presets
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  if (fig == "fig3") {
    base.target = tree_target(4, fig3_levels());
    out.emplace_back("", base);
  } else if (fig == "fig4") {
    base.weight_sharing = true;
    ExperimentConfig left = base, right = base;
    left.target = tree_target(4, relu_node_levels(1));
    right.target = tree_target(4, fig3_levels());
    right.activation = Activation::kSoftplus;
    out.emplace_back("relu_nodes", left);
    out.emplace_back("fig3_softplus", right);
  } else if (fig == "fig5") {
    base.weight_sharing = true;
    base.target = tree_target(4, relu_node_levels(2));
    out.emplace_back("", base);
  } else if (fig == "fig7") {
    base.target = tree_target(8, fig7_levels());
    out.emplace_back("", base);
  } else if (fig == "fig8") {
    base.target = tree_target(8, fig8_levels());
    out.emplace_back("", base);
  } else if (fig == "fig9") {
    small = true;
    base.target = tree_target(8, fig8_levels());
    base.noise_sigma = 3.0;
    base.selections = {Selection::kByTrain, Selection::kByValidation};
    out.emplace_back("", base);
  } else if (fig == "fig10") {
    small = true;
    base.target = tree_target(4, fig3_levels());
    base.noise_sigma = 0.3;
    out.emplace_back("", base);
  } else if (fig == "fig11") {
    base.target.kind = TargetSpec::Kind::kReluSum;
    base.target.n_inputs = 8;
    base.target.relu_units = 100;
    base.target.target_seed = 100;
    out.emplace_back("", base);
  } else if (fig == "fig12") {
    base.target = tree_target(8, fig8_levels());
    ExperimentConfig shuffled = base;
    shuffled.shuffle = true;
    shuffled.perm_seed = mix_seed(opt.seed, 12);
    out.emplace_back("unshuffled", base);
    out.emplace_back("shuffled", shuffled);
  } else {
    throw ValidationError("unknown figure '" + fig + "'; expected one of fig3 fig4 fig5 fig7 fig8 fig9 fig10 fig11 fig12");
  }
  for (auto& [label, c] : out) {
    if (opt.paper_scale) {
      c.train_size = c.test_size = small ? 2000 : 60000;
      c.trials = 200;
      c.space.epochs = 500;
    } else {
      c.train_size = c.test_size = small ? 2000 : 10000;
      c.trials = 30;
      // 2K rows are cheap enough for the full epoch budget, which is what
      // lets train-error selection overfit.
      if (small) c.space.epochs = 500;
    }
    if (opt.trials) c.trials = *opt.trials;
    if (opt.epochs) c.space.epochs = *opt.epochs;
    if (opt.samples) c.train_size = c.test_size = *opt.samples;
    derive_seeds(c, false, false, false);
    c.output_dir = label.empty() ? fig : fig + "/" + label;
  }
  return out;
}

struct FigureResult {
  std::string fig;
  std::vector<std::pair<std::string, ComparisonReport>> runs;

  const ComparisonReport& run(const std::string& label = "") const {
    for (const auto& [l, r] : runs) {
      if (l == label) return r;
    }
    throw ValidationError("figure has no run '" + label + "'");
  }
};

/// Cross-section f(x1, x2, 0.5, 0.25) on a regular grid over [-1,1]^2.
inline void write_cross_section(std::ostream& out, const Target& target, int points) {
  out << "# x1 x2 f\n";
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const double x[4] = {-1.0 + 2.0 * i / (points - 1), -1.0 + 2.0 * j / (points - 1), 0.5, 0.25};
      out << format_double(x[0]) << ' ' << format_double(x[1]) << ' ' << format_double(target(x)) << '\n';
    }
    out << '\n';
  }
}

/// Runs every config of a figure; writes under `out_root` when it is nonempty.
inline FigureResult reproduce(const std::string& fig, const ReproOptions& opt,
                              const std::filesystem::path& out_root = {}) {
  FigureResult result{fig, {}};
  for (auto& [label, config] : figure_configs(fig, opt)) {
    auto report = run_compare(config);
    if (!out_root.empty()) {
      write_comparison(out_root / config.output_dir, report, "repro " + fig);
      if (fig == "fig5") {
        auto out = open_output(out_root / config.output_dir / "cross_section.dat", provenance_for(config, "repro fig5"));
        write_cross_section(out, Target(config.target), 41);
      }
    }
    result.runs.emplace_back(label, std::move(report));
  }
  return result;
}

struct CheckOutcome {
  bool passed = true;
  std::vector<std::string> lines;
};

/// The ordering each figure is reproduced for.
inline CheckOutcome check_figure(const FigureResult& r) {
  CheckOutcome out;
  auto expect = [&out](bool ok, const std::string& what) {
    out.passed = out.passed && ok;
    out.lines.push_back((ok ? "ok   " : "FAIL ") + what);
  };
  auto ratio_line = [](const std::string& name, double a, double b) {
    return name + " = " + format_short(a) + " / " + format_short(b) + " = " + format_short(a / b);
  };
  const std::string& fig = r.fig;
  if (fig == "fig7" || fig == "fig8") {
    const auto& c = r.run();
    const double d = c.best_test("deep"), s = c.best_test("shallow");
    expect(d <= 0.8 * s, ratio_line("deep/shallow best test MSE", d, s) + " <= 0.8");
  } else if (fig == "fig11") {
    const auto& c = r.run();
    const double d = c.best_test("deep"), s = c.best_test("shallow");
    expect(s <= 1.1 * d, ratio_line("shallow/deep best test MSE", s, d) + " <= 1.1");
  } else if (fig == "fig12") {
    const auto& u = r.run("unshuffled");
    const auto& sh = r.run("shuffled");
    const double dr = sh.best_test("deep") / u.best_test("deep");
    const double sr = sh.best_test("shallow") / u.best_test("shallow");
    expect(dr >= 1.5, ratio_line("deep shuffled/unshuffled", sh.best_test("deep"), u.best_test("deep")) + " >= 1.5");
    expect(sr >= 0.5 && sr <= 2.0,
           ratio_line("shallow shuffled/unshuffled", sh.best_test("shallow"), u.best_test("shallow")) +
               " in [0.5, 2]");
  } else if (fig == "fig9") {
    const auto& c = r.run();
    const double v = c.best_test("deep", Selection::kByValidation);
    const double t = c.best_test("deep", Selection::kByTrain);
    expect(v <= t, "deep test MSE, validation vs train selection: " + format_short(v) + " <= " + format_short(t));
  } else {
    for (const auto& [label, c] : r.runs) {
      const double d = c.best_test("deep"), s = c.best_test("shallow");
      expect(d <= s, (label.empty() ? "" : label + ": ") + ratio_line("deep/shallow best test MSE", d, s) + " <= 1");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constructive gadget reports
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& gadget_ids() {
  static const std::vector<std::string> ids = {"min",     "indicator1d", "indicator2d", "pwc",     "polyfit",
                                               "polytree", "powertower", "ramp2abs",    "parity"};
  return ids;
}

/// Gadget parameters by name; missing entries take the documented defaults.
using GadgetParams = std::map<std::string, double>;

inline ConstructReport construct_gadget(const std::string& gadget, const GadgetParams& params,
                                        std::uint64_t seed) {
  auto get = [&params](const std::string& key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  auto as_count = [](double v, const char* what) {
    if (!(v >= 0) || v != std::floor(v) || v > 1e12) {
      throw ValidationError(std::string(what) + " must be a nonnegative integer");
    }
    return static_cast<long long>(v);
  };
  ConstructReport report{gadget, {}};
  Rng rng(seed);
  if (gadget == "min") {
    const auto pairs = as_count(get("pairs", 1e6), "pairs");
    const auto net = relu_min();
    double worst = 0.0;
    for (long long t = 0; t < pairs; ++t) {
      // Dyadic inputs keep every ramp sum exact, so "exact" means zero.
      const double x[2] = {std::ldexp(static_cast<double>(rng.uniform_int(-(1LL << 31), 1LL << 31)), -30),
                           std::ldexp(static_cast<double>(rng.uniform_int(-(1LL << 31), 1LL << 31)), -30)};
      worst = std::max(worst, std::abs(forward(net, x) - std::min(x[0], x[1])));
    }
    report.add("units", net.units);
    report.add("pairs", static_cast<double>(pairs));
    report.add("max_deviation", worst);
  } else if (gadget == "indicator1d") {
    const IndicatorSpec spec{get("x0", 0.25), get("x1", 0.5), get("eta", 0.01)};
    const auto net = indicator_1d(spec);
    const auto nodes = as_count(get("nodes", 1e5), "nodes");
    auto r = [&net](double x) { return forward(net, std::span<const double>(&x, 1)); };
    auto chi = [&spec](double x) { return x >= spec.x0 && x <= spec.x1 ? 1.0 : 0.0; };
    const double err = quad_l2_error(chi, r, {0.0, 1.0}, static_cast<long>(nodes));
    report.add("units", net.units);
    report.add("eta", spec.eta);
    report.add("l2_error", err);
    report.add("closed_form", std::sqrt(2.0 * spec.eta / 3.0));
    report.add("abs_difference", std::abs(err - std::sqrt(2.0 * spec.eta / 3.0)));
  } else if (gadget == "indicator2d") {
    const Rect rect{get("x0", 0.2), get("x1", 0.6), get("y0", 0.3), get("y1", 0.7)};
    const double eta = get("eta", 0.01);
    const auto nodes = as_count(get("nodes", 1000), "nodes");
    const auto ind = indicator_2d(rect, eta);
    auto chi = [&rect](double x, double y) {
      return x >= rect.x0 && x <= rect.x1 && y >= rect.y0 && y <= rect.y1 ? 1.0 : 0.0;
    };
    const double err = quad_l2_error_2d(chi, ind, {0, 1}, {0, 1}, static_cast<long>(nodes));
    const double eps2 = 2.0 * eta / 3.0;
    report.add("units", static_cast<double>(ind.unit_count()));
    report.add("squared_l2_error", err * err);
    report.add("squared_1d_error", eps2);
    report.add("constant_c", err * err / eps2);
  } else if (gadget == "pwc") {
    const double eps = get("eps", 0.1);
    const auto grid = static_cast<int>(as_count(get("grid", 21), "grid"));
    const auto g = build_binary_tree(4, fig3_levels());
    const auto approx = pwc_tree_approx(g, eps);
    const double measured = grid_sup_error(
        4, grid, {-1, 1}, [&g](std::span<const double> x) { return g.evaluate(x); },
        [&approx](std::span<const double> x) { return approx.evaluate(x); });
    report.add("epsilon", eps);
    for (std::size_t v = 0; v < approx.nodes.size(); ++v) {
      report.add("node" + std::to_string(v) + "_k", approx.nodes[v].k);
      report.add("node" + std::to_string(v) + "_units", static_cast<double>(approx.nodes[v].units));
    }
    report.add("total_units", static_cast<double>(approx.total_units()));
    report.add("measured_sup_error", measured);
    report.add("propagated_bound", approx.error_bound());
    report.add("constant_c", approx.constant());
  } else if (gadget == "polyfit") {
    const int which = static_cast<int>(get("target", 0));  // 0: |x|^3, 1: cos(2x)
    const int k = static_cast<int>(as_count(get("k", 8), "k"));
    std::function<double(std::span<const double>)> f;
    if (which == 0) {
      f = [](std::span<const double> x) { return std::pow(std::abs(x[0]), 3); };
    } else if (which == 1) {
      f = [](std::span<const double> x) { return std::cos(2 * x[0]); };
    } else {
      throw ValidationError("polyfit target must be 0 (|x|^3) or 1 (cos 2x)");
    }
    const auto r = poly_fit(f, {1, k});
    report.add("k", k);
    report.add("coefficients", static_cast<double>(r.coefficient_count));
    report.add("rank", static_cast<double>(r.rank));
    report.add("sup_error", r.sup_error);
    report.add("l2_error", r.l2_error);
  } else if (gadget == "polytree") {
    const int k = static_cast<int>(as_count(get("k", 6), "k"));
    const auto grid = static_cast<int>(as_count(get("grid", 21), "grid"));
    const auto g = build_binary_tree(4, fig3_levels());
    const auto fit = poly_tree_fit(g, k);
    const double measured = grid_sup_error(
        4, grid, {-1, 1}, [&g](std::span<const double> x) { return g.evaluate(x); },
        [&fit](std::span<const double> x) { return fit.evaluate(x); });
    report.add("k", k);
    report.add("coefficient_budget", static_cast<double>(fit.coefficient_budget));
    for (std::size_t v = 0; v < fit.nodes.size(); ++v) {
      report.add("node" + std::to_string(v) + "_error", fit.nodes[v].node_error);
    }
    report.add("measured_sup_error", measured);
    report.add("propagated_bound", fit.error_bound());
  } else if (gadget == "powertower") {
    const int s = static_cast<int>(as_count(get("s", 10), "s"));
    const auto samples = as_count(get("samples", 1e4), "samples");
    double worst = 0.0;
    for (long long t = 0; t < samples; ++t) {
      // Small quadratic terms around a constant in [-0.9, 0.9] keep
      // |inner| <= 0.98 while most towers stay clear of underflow.
      InnerQuadratic q{rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008),
                       rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008),
                       rng.uniform(-0.008, 0.008), rng.uniform(-0.008, 0.008), rng.uniform(-0.9, 0.9)};
      const auto tower = power_tower(q, s);
      const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
      const double a = tower.evaluate(x, y), b = tower.direct(x, y);
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), DBL_MIN));
    }
    const auto tower = power_tower({}, s);
    report.add("s", s);
    report.add("units", static_cast<double>(tower.unit_count()));
    report.add("layers", tower.layer_count());
    report.add("max_relative_error", worst);
  } else if (gadget == "ramp2abs") {
    const auto ramps = as_count(get("ramps", 10), "ramps");
    RampCombo combo;
    for (long long i = 0; i < ramps; ++i) {
      combo.coeffs.push_back(rng.uniform(-2, 2));
      combo.knots.push_back(rng.uniform(-1, 1));
    }
    const auto abs_form = ramp_to_abs(combo, {-1, 1});
    const auto pure = fold_affine(abs_form, {-1, 1});
    double worst = 0.0, worst_pure = 0.0;
    for (int i = 0; i <= 10000; ++i) {
      const double x = -1.0 + 2.0 * i / 10000;
      worst = std::max(worst, std::abs(abs_form(x) - combo(x)));
      worst_pure = std::max(worst_pure, std::abs(pure(x) - combo(x)));
    }
    report.add("ramps", static_cast<double>(ramps));
    report.add("max_deviation", worst);
    report.add("max_deviation_pure_abs", worst_pure);
  } else if (gadget == "parity") {
    const int d = static_cast<int>(as_count(get("d", 16), "d"));
    const auto tree = product_tree(d);
    report.add("d", d);
    report.add("nodes", static_cast<double>(tree.node_count()));
    report.add("mismatches", static_cast<double>(parity_mismatches(tree)));
  } else {
    throw ValidationError("unknown gadget '" + gadget +
                          "'; expected min, indicator1d, indicator2d, pwc, polyfit, polytree, powertower, "
                          "ramp2abs or parity");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Bounds queries
// ---------------------------------------------------------------------------

/// Reads the [bounds] section; absent keys keep the BoundsQuery defaults.
inline BoundsQuery parse_bounds_query(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({std::string("malformed INI: ") + e.message() + " (line " + std::to_string(e.line()) + ")"});
  }
  BoundsQuery q;
  auto& g = q.generalization;
  const std::map<std::string, double*> reals = {
      {"n", &q.n},       {"m", &q.m},         {"epsilon", &q.epsilon}, {"L", &q.L},     {"N", &q.N},
      {"M", &g.M},       {"epsilon_G", &g.epsilon_G}, {"delta", &g.delta}, {"k_bits", &g.k_bits},
      {"W", &g.W},       {"gen_n", &g.n},     {"gen_m", &g.m},         {"gen_epsilon", &g.epsilon}};
  const std::map<std::string, std::uint64_t*> counts = {{"k_degree", &q.k_degree}, {"hvq_length", &q.hvq_length}};
  std::vector<std::string> errors;
  for (const auto& [section, body] : tree) {
    if (section != "bounds") {
      errors.push_back("unknown section [" + section + "] (bounds configs hold only [bounds])");
      continue;
    }
    for (const auto& [key, node] : body) {
      const std::string value = trim(node.get_value<std::string>());
      try {
        std::size_t used = 0;
        if (auto it = reals.find(key); it != reals.end()) {
          *it->second = std::stod(value, &used);
        } else if (auto jt = counts.find(key); jt != counts.end()) {
          if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
          *jt->second = std::stoull(value, &used);
        } else {
          errors.push_back("unknown key bounds." + key);
          continue;
        }
        if (used != value.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception& e) {
        errors.push_back("bounds." + key + ": cannot parse '" + value + "' (" + e.what() + ")");
      }
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return q;
}

}  // namespace compnet

#endif  // COMPNET_EXPERIMENT_HPP_
