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

// compnet command-line front end.
//
//   compnet gen       --config c.ini --out dir
//   compnet train     --config c.ini --arch deep|shallow --out dir
//   compnet compare   --config c.ini --out dir
//   compnet construct <gadget> [--param value ...] [--out file]
//   compnet bounds    [--config b.ini] [--out file]
//   compnet repro     <fig> [--seed S] [--trials K] [--paper-scale] [--check] [--out dir]
//
// Exit codes: 0 ok, 1 validation error, 2 divergence, 3 check failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "compnet/experiment.hpp"

namespace {

using namespace compnet;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitCheck = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (INI)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the master seed; derived seeds are re-derived from it");
  cmd->add_option("--trials", c.trials, "override the number of random-search trials K")->check(CLI::PositiveNumber);
  cmd->add_option("--threads", c.threads, "worker threads for the search")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const Common& c) {
  auto config = parse_config_file(c.config);
  if (c.seed) {
    config.seed = *c.seed;
    derive_seeds(config, false, false, false);
  }
  if (c.trials) config.trials = *c.trials;
  if (c.threads) config.threads = *c.threads;
  validate(config);
  return config;
}

fs::path out_dir(const Common& c, const ExperimentConfig& config) {
  return c.out.empty() ? fs::path(config.output_dir) : fs::path(c.out);
}

int cmd_gen(const Common& c) {
  const auto config = load(c);
  const auto data = make_data(config);
  const auto dir = out_dir(c, config);
  const auto prov = provenance_for(config, "gen");
  write_config(dir, config, prov);
  {
    auto out = open_output(dir / "train.csv", prov);
    write_dataset_csv(out, data.train);
  }
  auto out = open_output(dir / "test.csv", prov);
  write_dataset_csv(out, data.test);
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test rows to " << dir.string()
            << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& arch_name) {
  const auto config = load(c);
  const auto data = make_data(config);
  const auto specs = architectures(config);
  const auto arch = run_architecture(config, data, arch_name == "deep" ? specs[0] : specs[1], arch_name);
  const auto dir = out_dir(c, config);
  const auto prov = provenance_for(config, "train");
  write_config(dir, config, prov);
  write_architecture(dir, arch, config, prov);
  for (const auto& [sel, idx] : arch.best) {
    const auto& r = arch.search.records[idx];
    std::cout << arch.name << " " << to_string(sel) << ": trial " << idx << " train " << format_short(r.final_train)
              << " test " << format_short(r.final_test) << '\n';
  }
  return kExitOk;
}

void print_comparison(const ComparisonReport& report, const std::string& prefix) {
  for (const auto& arch : report.archs) {
    for (const auto& [sel, idx] : arch.best) {
      const auto& r = arch.search.records[idx];
      std::cout << prefix << arch.name << " (" << arch.params << " params) " << to_string(sel) << ": train "
                << format_short(r.final_train) << " test " << format_short(r.final_test) << '\n';
    }
  }
}

int cmd_compare(const Common& c) {
  const auto config = load(c);
  const auto report = run_compare(config);
  write_comparison(out_dir(c, config), report, "compare");
  print_comparison(report, "");
  return kExitOk;
}

int cmd_construct(const std::string& gadget, const GadgetParams& params, std::uint64_t seed, const std::string& out) {
  const auto report = construct_gadget(gadget, params, seed);
  const ConstructReport reports[1] = {report};
  if (out.empty()) {
    write_report_csv(std::cout, reports);
  } else {
    Provenance prov{fnv1a64(gadget), {{"seed", seed}}, "construct " + gadget};
    auto file = open_output(out, prov);
    write_report_csv(file, reports);
  }
  return kExitOk;
}

int cmd_bounds(const std::string& config_path, const std::string& out) {
  BoundsQuery q;
  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ValidationError("cannot open config '" + config_path + "'");
    text.assign(std::istreambuf_iterator<char>(in), {});
    std::istringstream ss(text);
    q = parse_bounds_query(ss);
  }
  const auto rows = bounds_table(q);
  if (out.empty()) {
    write_bounds_csv(std::cout, rows);
  } else {
    Provenance prov{fnv1a64(text), {}, "bounds"};
    auto file = open_output(out, prov);
    write_bounds_csv(file, rows);
  }
  return kExitOk;
}

int cmd_repro(const std::string& fig, const Common& c, bool paper_scale, bool check, std::optional<int> epochs,
              std::optional<std::size_t> samples) {
  ReproOptions opt;
  opt.epochs = epochs;
  opt.samples = samples;
  opt.seed = c.seed.value_or(42);
  opt.trials = c.trials;
  opt.paper_scale = paper_scale;
  opt.threads = c.threads.value_or(1);
  const fs::path root = c.out.empty() ? fs::path("repro") : fs::path(c.out);
  const auto result = reproduce(fig, opt, root);
  for (const auto& [label, report] : result.runs) print_comparison(report, label.empty() ? "" : label + ": ");
  std::cout << "artifacts in " << (root / fig).string() << '\n';
  if (!check) return kExitOk;
  const auto outcome = check_figure(result);
  for (const auto& line : outcome.lines) std::cout << line << '\n';
  return outcome.passed ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compnet: shallow vs compositional network experiments"};
  app.set_version_flag("--version", std::string("compnet ") + kToolkitVersion);
  app.require_subcommand(1);

  Common gen_opts, train_opts, compare_opts, repro_opts;
  std::string arch = "deep";
  std::string gadget, construct_out, bounds_config, bounds_out;
  std::uint64_t construct_seed = 1;
  std::string figure;
  bool paper_scale = false, check = false;

  auto* gen = app.add_subcommand("gen", "sample train/test datasets from a config");
  add_common(gen, gen_opts, true);
  gen->add_option("--out", gen_opts.out, "output directory (default: config output_dir)");

  auto* train = app.add_subcommand("train", "random search for one architecture");
  add_common(train, train_opts, true);
  train->add_option("--arch", arch, "deep (binary tree) or shallow")->check(CLI::IsMember({"deep", "shallow"}));
  train->add_option("--out", train_opts.out, "output directory (default: config output_dir)");

  auto* compare = app.add_subcommand("compare", "budget-matched deep vs shallow comparison");
  add_common(compare, compare_opts, true);
  compare->add_option("--out", compare_opts.out, "output directory (default: config output_dir)");

  auto* construct = app.add_subcommand("construct", "build a constructive gadget and verify it");
  construct->add_option("gadget", gadget, "min indicator1d indicator2d pwc polyfit polytree powertower ramp2abs parity")
      ->required();
  construct->add_option("--seed", construct_seed, "seed for randomized checks");
  construct->add_option("--out", construct_out, "report CSV (default: stdout)");
  GadgetParams params;
  const char* param_names[] = {"pairs", "x0", "x1", "y0", "y1", "eta", "nodes", "eps",
                               "grid",  "target", "k", "s", "samples", "ramps", "d"};
  std::map<std::string, std::optional<double>> raw_params;
  for (const char* name : param_names) {
    construct->add_option(std::string("--") + name, raw_params[name], std::string("gadget parameter ") + name);
  }

  auto* bounds = app.add_subcommand("bounds", "evaluate the complexity and bound formulas");
  bounds->add_option("--config", bounds_config, "INI file with a [bounds] section")->check(CLI::ExistingFile);
  bounds->add_option("--out", bounds_out, "table CSV (default: stdout)");

  auto* repro = app.add_subcommand("repro", "rerun a canned figure experiment");
  repro->add_option("figure", figure, "fig3 fig4 fig5 fig7 fig8 fig9 fig10 fig11 fig12")->required();
  add_common(repro, repro_opts, false);
  repro->add_option("--out", repro_opts.out, "artifact root (default: ./repro)");
  std::optional<int> repro_epochs;
  std::optional<std::size_t> repro_samples;
  repro->add_option("--epochs", repro_epochs, "override the epoch budget")->check(CLI::PositiveNumber);
  repro->add_option("--samples", repro_samples, "override train and test sizes")->check(CLI::PositiveNumber);
  repro->add_flag("--paper-scale", paper_scale, "60K samples, K=200, 500 epochs");
  repro->add_flag("--check", check, "apply the figure's ordering check; exit 3 on failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen(gen_opts);
    if (*train) return cmd_train(train_opts, arch);
    if (*compare) return cmd_compare(compare_opts);
    if (*construct) {
      for (const auto& [name, value] : raw_params) {
        if (value) params[name] = *value;
      }
      return cmd_construct(gadget, params, construct_seed, construct_out);
    }
    if (*bounds) return cmd_bounds(bounds_config, bounds_out);
    if (*repro) {
      if (!repro_opts.config.empty()) throw ValidationError("repro takes no --config; figures are canned");
      return cmd_repro(figure, repro_opts, paper_scale, check, repro_epochs, repro_samples);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
