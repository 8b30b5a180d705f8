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

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "compnet/experiment.hpp"

namespace compnet {
namespace {

namespace fs = std::filesystem;

const char* kFig7Config = R"(
; a small version of the fig7 preset
[experiment]
name = small
seed = 7
output_dir = out_small

[target]
kind = tree
n_inputs = 8
level_fns = cos_sum(0.59, 1.5); quad_sum(1.1, -1); quad_sum(1.1, -1)

[data]
train_size = 300
test_size = 200

[architecture]
tree_units = 4

[search]
trials = 3
epochs = 4
)";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("compnet_test_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Config, ParsesAndDerivesSeeds) {
  const auto c = parse(kFig7Config);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.target.level_fns.size(), 3u);
  EXPECT_EQ(c.train_size, 300u);
  EXPECT_EQ(c.tree_units, 4);
  EXPECT_EQ(c.data_seed, mix_seed(7, 1));
  EXPECT_EQ(c.test_seed, mix_seed(7, 2));
  EXPECT_EQ(c.search_seed, mix_seed(7, 3));
  EXPECT_EQ(c.space.epochs, 4);
}

TEST(Config, CanonicalTextIsAFixedPoint) {
  const auto c = parse(kFig7Config);
  const auto text = to_ini(c);
  EXPECT_EQ(to_ini(parse(text)), text);
  EXPECT_EQ(config_hash(parse(text)), config_hash(c));
}

TEST(Config, HashTracksEveryField) {
  const auto base = parse(kFig7Config);
  auto other = base;
  other.noise_sigma = 0.5;
  EXPECT_NE(config_hash(base), config_hash(other));
  other = base;
  other.space.batch_sizes = {32};
  EXPECT_NE(config_hash(base), config_hash(other));
}

TEST(Config, ExplicitDerivedSeedsWin) {
  std::string text = kFig7Config;
  text.replace(text.find("[data]\n"), 7, "[data]\ndata_seed = 99\n");
  const auto c = parse(text);
  EXPECT_EQ(c.data_seed, 99u);
  EXPECT_EQ(c.test_seed, mix_seed(7, 2));
}

TEST(Config, MissingSeedNamesTheField) {
  std::string text = kFig7Config;
  text.erase(text.find("seed = 7\n"), 9);
  const auto errors = errors_of(text);
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_NE(errors[0].find("experiment.seed"), std::string::npos);
}

TEST(Config, ListsEveryProblemAtOnce) {
  const auto errors = errors_of(R"(
[experiment]
name = broken
[target]
kind = tree
n_inputs = 6
level_fns = nope(1)
colour = blue
[data]
noise_sigma = -1
[search]
trials = 0
selection = by_vibes
[extra]
x = 1
)");
  EXPECT_TRUE(mentions(errors, "experiment.seed"));
  EXPECT_TRUE(mentions(errors, "target.colour"));
  EXPECT_TRUE(mentions(errors, "[extra]"));
  EXPECT_TRUE(mentions(errors, "level_fns"));
  EXPECT_TRUE(mentions(errors, "noise_sigma"));
  EXPECT_TRUE(mentions(errors, "trials"));
  EXPECT_TRUE(mentions(errors, "selection"));
  EXPECT_TRUE(mentions(errors, "power of two"));
  EXPECT_GE(errors.size(), 8u);
}

TEST(Config, RejectsArchitecturesThatCoincide) {
  const auto errors = errors_of(R"(
[experiment]
seed = 1
[target]
n_inputs = 2
level_fns = product
[architecture]
tree_units = 5
shallow_units = 5
)");
  EXPECT_TRUE(mentions(errors, "architectures must differ"));
  // Different unit counts are fine.
  EXPECT_NO_THROW(parse("[experiment]\nseed=1\n[target]\nn_inputs=2\nlevel_fns=product\n"
                        "[architecture]\ntree_units=5\nshallow_units=6\n"));
}

TEST(Config, ShuffleNeedsPermSeed) {
  std::string text = kFig7Config;
  text.replace(text.find("[data]\n"), 7, "[data]\nshuffle = true\n");
  EXPECT_TRUE(mentions(errors_of(text), "perm_seed"));
}

TEST(Config, MalformedIniIsAValidationError) {
  EXPECT_THROW(parse("[experiment\nseed = 1\n"), ValidationError);
}

TEST(Config, DagTargetEvaluatesLikeBuildDag) {
  const auto c = parse(R"(
[experiment]
seed = 3
[target]
kind = dag
n_inputs = 4
nodes = 0 <- x0, x1 : quad_sum(1, 0); 1 <- x2, x3 : product; 2 <- n0, n1 : abs_diff_sq
[architecture]
tree_units = 3
)");
  const Target target(c.target);
  const auto g = build_dag({{0, {Source::input(0), Source::input(1)}, QuadSum{1, 0}},
                            {1, {Source::input(2), Source::input(3)}, Product{}},
                            {2, {Source::node(0), Source::node(1)}, AbsDiffSq{}}},
                           4);
  const double x[4] = {0.3, -0.2, 0.9, 0.4};
  EXPECT_EQ(target(x), g.evaluate(x));
  EXPECT_EQ(to_ini(parse(to_ini(c))), to_ini(c));
}

TEST(Target, ReluSumMatchesItsDefinition) {
  const auto net = relu_sum_target(8, 100, 5);
  Rng rng(5);
  std::vector<std::array<double, 8>> w(100);
  std::vector<double> b(100), coef(100);
  for (int k = 0; k < 100; ++k) {
    for (auto& v : w[k]) v = rng.uniform(-1, 1);
    b[k] = rng.uniform(-1, 1);
    coef[k] = rng.normal() / 10.0;
  }
  const double x[8] = {0.1, -0.5, 0.7, 0.2, -0.9, 0.3, 0.0, 0.6};
  double expected = 0.0;
  for (int k = 0; k < 100; ++k) {
    double z = b[k];
    for (int j = 0; j < 8; ++j) z += w[k][j] * x[j];
    expected += coef[k] * std::max(0.0, z);
  }
  EXPECT_NEAR(forward(net, x), expected, 1e-12);
}

TEST(Data, ShuffleAppliesOnePermutationToBothSplits) {
  auto c = parse(kFig7Config);
  const auto plain = make_data(c);
  c.shuffle = true;
  c.perm_seed = 11;
  const auto shuffled = make_data(c);
  const auto perm = random_permutation(8, 11);
  EXPECT_EQ(shuffled.train.inputs, permute_coordinates(plain.train, perm).inputs);
  EXPECT_EQ(shuffled.test.inputs, permute_coordinates(plain.test, perm).inputs);
  EXPECT_EQ(shuffled.train.targets, plain.train.targets);
}

TEST(Compare, DeterministicAndShared) {
  const auto c = parse(kFig7Config);
  const auto a = run_compare(c);
  const auto b = run_compare(c);
  ASSERT_EQ(a.archs.size(), 2u);
  for (int k = 0; k < 2; ++k) {
    ASSERT_EQ(a.archs[k].search.records.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(a.archs[k].search.records[t].train_curve, b.archs[k].search.records[t].train_curve);
      EXPECT_EQ(a.archs[k].search.records[t].test_curve, b.archs[k].search.records[t].test_curve);
    }
  }
  // Both architectures see the same hyperparameter draws.
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a.archs[0].search.records[t].hyperparams.step_size, a.archs[1].search.records[t].hyperparams.step_size);
    EXPECT_EQ(a.archs[0].search.records[t].hyperparams.batch_size,
              a.archs[1].search.records[t].hyperparams.batch_size);
  }
  EXPECT_EQ(a.arch("deep").params, tree_param_count(8, 4, false));
  EXPECT_NEAR(static_cast<double>(a.arch("shallow").params) / a.arch("deep").params, 1.0, 0.1);
}

TEST(Compare, ThreadCountDoesNotChangeResults) {
  auto c = parse(kFig7Config);
  const auto one = run_compare(c);
  c.threads = 3;
  const auto three = run_compare(c);
  for (int k = 0; k < 2; ++k) {
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(one.archs[k].search.records[t].test_curve, three.archs[k].search.records[t].test_curve);
    }
  }
}

TEST(Compare, InvalidConfigFailsBeforeCompute) {
  auto c = parse(kFig7Config);
  c.trials = 0;
  c.tree_units = 0;
  try {
    run_compare(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.errors().size(), 2u);
  }
}

TEST(Compare, BothSelectionsShareTrials) {
  auto c = parse(kFig7Config);
  c.selections = {Selection::kByTrain, Selection::kByValidation};
  const auto r = run_compare(c);
  for (const auto& arch : r.archs) {
    EXPECT_EQ(arch.best_for(Selection::kByTrain), select_best(arch.search.records, Selection::kByTrain));
    EXPECT_EQ(arch.best_for(Selection::kByValidation), select_best(arch.search.records, Selection::kByValidation));
    for (const auto& rec : arch.search.records) EXPECT_TRUE(std::isfinite(rec.final_val));
  }
}

TEST(Output, EveryFileCarriesProvenanceAndIsReproducible) {
  const auto c = parse(kFig7Config);
  const auto d1 = scratch("out1"), d2 = scratch("out2");
  write_comparison(d1, run_compare(c), "compare");
  write_comparison(d2, run_compare(c), "compare");
  const std::string header = provenance_for(c, "compare").header();
  EXPECT_NE(header.find("config_hash=" + hex64(config_hash(c))), std::string::npos);
  EXPECT_NE(header.find("seed=7"), std::string::npos);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(d1)) {
    const auto text = slurp(entry.path());
    EXPECT_EQ(text.rfind(header, 0), 0u) << entry.path();
    EXPECT_EQ(text, slurp(d2 / entry.path().filename())) << entry.path();
    ++files;
  }
  EXPECT_EQ(files, 10);
  // Net files read back despite the provenance line.
  std::ifstream net(d1 / "deep_net.csv");
  EXPECT_TRUE(std::holds_alternative<TreeNet>(read_net_csv(net)));
  // So does the written config.
  EXPECT_EQ(to_ini(parse_config_file(d1 / "config.ini")), to_ini(c));
}

TEST(Output, PlotDataHasOneRowPerEpoch) {
  RunRecord r;
  r.train_curve = {3.0, 2.0};
  r.test_curve = {3.5, 2.5};
  std::ostringstream out;
  write_plot_data(out, r);
  EXPECT_EQ(out.str(), "# epoch train_mse test_mse\n0 3 3.5\n1 2 2.5\n");
}

TEST(Output, DatasetReadsBackAfterProvenance) {
  const auto c = parse(kFig7Config);
  const auto data = make_data(c);
  std::stringstream ss;
  ss << provenance_for(c, "gen").header();
  write_dataset_csv(ss, data.train);
  const auto back = read_dataset_csv(ss);
  EXPECT_EQ(back.inputs, data.train.inputs);
  EXPECT_EQ(back.targets, data.train.targets);
}

TEST(Figures, CannedConfigsAreValidAndScaled) {
  for (const auto& fig : figure_ids()) {
    const auto configs = figure_configs(fig, {});
    ASSERT_FALSE(configs.empty()) << fig;
    for (const auto& [label, c] : configs) {
      EXPECT_NO_THROW(validate(c)) << fig << " " << label;
      const bool small = fig == "fig9" || fig == "fig10";
      EXPECT_EQ(c.train_size, small ? 2000u : 10000u) << fig;
      EXPECT_EQ(c.test_size, c.train_size);
      EXPECT_EQ(c.trials, 30);
      EXPECT_EQ(c.space.epochs, small ? 500 : 60);
      EXPECT_EQ(c.seed, 42u);
    }
    ReproOptions full;
    full.paper_scale = true;
    for (const auto& [label, c] : figure_configs(fig, full)) {
      EXPECT_EQ(c.trials, 200);
      EXPECT_EQ(c.space.epochs, 500);
      if (fig != "fig9" && fig != "fig10") {
        EXPECT_EQ(c.train_size, 60000u);
      }
    }
  }
  EXPECT_THROW(figure_configs("fig6", {}), ValidationError);
}

TEST(Figures, PresetSpecifics) {
  const auto fig12 = figure_configs("fig12", {});
  ASSERT_EQ(fig12.size(), 2u);
  EXPECT_FALSE(fig12[0].second.shuffle);
  EXPECT_TRUE(fig12[1].second.shuffle);
  EXPECT_EQ(fig12[0].second.data_seed, fig12[1].second.data_seed);
  const auto fig9 = figure_configs("fig9", {}).at(0).second;
  EXPECT_TRUE(fig9.selects_by_validation());
  EXPECT_EQ(fig9.selections.size(), 2u);
  EXPECT_GT(fig9.noise_sigma, 0.0);
  const auto fig11 = figure_configs("fig11", {}).at(0).second;
  EXPECT_EQ(fig11.target.kind, TargetSpec::Kind::kReluSum);
  EXPECT_EQ(fig11.target.relu_units, 100);
  const auto fig4 = figure_configs("fig4", {});
  ASSERT_EQ(fig4.size(), 2u);
  EXPECT_TRUE(fig4[0].second.weight_sharing);
  EXPECT_EQ(fig4[1].second.activation, Activation::kSoftplus);
}

TEST(Figures, CrossSectionHoldsTheLastTwoInputs) {
  const auto c = figure_configs("fig5", {}).at(0).second;
  const Target target(c.target);
  std::ostringstream out;
  write_cross_section(out, target, 3);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double x1, x2, f;
    row >> x1 >> x2 >> f;
    const double x[4] = {x1, x2, 0.5, 0.25};
    EXPECT_EQ(f, target(x));
    ++rows;
  }
  EXPECT_EQ(rows, 9);
}

ComparisonReport fake_report(double deep, double shallow) {
  ComparisonReport r;
  for (auto [name, value] : {std::pair{"deep", deep}, std::pair{"shallow", shallow}}) {
    ArchResult a;
    a.name = name;
    RunRecord rec;
    rec.final_train = rec.final_test = value;
    rec.final_val = value;
    a.search.records = {rec};
    a.best = {{Selection::kByTrain, 0}, {Selection::kByValidation, 0}};
    r.archs.push_back(a);
  }
  return r;
}

TEST(Figures, ChecksApplyTheDocumentedThresholds) {
  EXPECT_TRUE(check_figure({"fig7", {{"", fake_report(0.8, 1.0)}}}).passed);
  EXPECT_FALSE(check_figure({"fig7", {{"", fake_report(0.81, 1.0)}}}).passed);
  EXPECT_TRUE(check_figure({"fig11", {{"", fake_report(1.0, 1.1)}}}).passed);
  EXPECT_FALSE(check_figure({"fig11", {{"", fake_report(1.0, 1.11)}}}).passed);
  EXPECT_TRUE(check_figure({"fig12", {{"unshuffled", fake_report(1, 1)}, {"shuffled", fake_report(1.5, 2)}}}).passed);
  EXPECT_FALSE(check_figure({"fig12", {{"unshuffled", fake_report(1, 1)}, {"shuffled", fake_report(1.4, 1)}}}).passed);
  EXPECT_FALSE(check_figure({"fig12", {{"unshuffled", fake_report(1, 1)}, {"shuffled", fake_report(2, 2.1)}}}).passed);
  EXPECT_TRUE(check_figure({"fig4", {{"a", fake_report(1, 2)}, {"b", fake_report(1, 1)}}}).passed);
  EXPECT_FALSE(check_figure({"fig4", {{"a", fake_report(1, 2)}, {"b", fake_report(2, 1)}}}).passed);
}

TEST(Gadgets, Reports) {
  const auto find = [](const ConstructReport& r, const std::string& key) { return r.get(key); };
  EXPECT_EQ(find(construct_gadget("min", {{"pairs", 10000}}, 1), "max_deviation"), 0.0);
  EXPECT_EQ(find(construct_gadget("powertower", {{"s", 10}, {"samples", 100}}, 1), "units"), 39.0);
  EXPECT_NEAR(find(construct_gadget("indicator1d", {{"eta", 0.01}}, 1), "l2_error"), 0.08165, 1e-4);
  EXPECT_EQ(find(construct_gadget("parity", {{"d", 8}}, 1), "mismatches"), 0.0);
  EXPECT_LE(find(construct_gadget("ramp2abs", {}, 3), "max_deviation_pure_abs"), 1e-12);
  const auto pwc = construct_gadget("pwc", {{"eps", 0.2}, {"grid", 9}}, 1);
  EXPECT_LE(find(pwc, "measured_sup_error"), find(pwc, "propagated_bound"));
  EXPECT_THROW(construct_gadget("maxout", {}, 1), ValidationError);
  EXPECT_THROW(construct_gadget("min", {{"pairs", -1}}, 1), ValidationError);
  EXPECT_THROW(construct_gadget("indicator1d", {{"eta", 0.9}}, 1), ValidationError);
}

TEST(Bounds, QueryParsing) {
  std::istringstream in("[bounds]\nn = 10\nepsilon = 0.05\nhvq_length = 200\nM = 1e5\n");
  const auto q = parse_bounds_query(in);
  EXPECT_EQ(q.n, 10);
  EXPECT_EQ(q.epsilon, 0.05);
  EXPECT_EQ(q.hvq_length, 200u);
  EXPECT_EQ(q.generalization.M, 1e5);
  std::istringstream bad("[bounds]\nq = 1\nn = ten\n");
  try {
    parse_bounds_query(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.errors().size(), 2u);
  }
}

// ---------------------------------------------------------------------------
// The installed command line
// ---------------------------------------------------------------------------

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(COMPNET_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

TEST(Cli, ConstructPrintsReports) {
  auto r = run_cli("construct powertower --s 10 --samples 100");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("powertower,units,39"), std::string::npos);
  r = run_cli("construct min --pairs 1000");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("min,max_deviation,0\n"), std::string::npos);
}

TEST(Cli, ValidationErrorsExitOne) {
  EXPECT_EQ(run_cli("construct nothing").code, 1);
  EXPECT_EQ(run_cli("repro fig6").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);
  EXPECT_EQ(run_cli("construct indicator1d --eta 2").code, 1);
  const auto dir = scratch("cli_bad");
  write_file(dir / "bad.ini", "[experiment]\nname = x\n[target]\nn_inputs = 8\nlevel_fns = product\n");
  const auto r = run_cli("compare --config " + (dir / "bad.ini").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("experiment.seed"), std::string::npos);
}

TEST(Cli, DivergenceExitsTwo) {
  const auto dir = scratch("cli_div");
  write_file(dir / "div.ini", R"([experiment]
seed = 1
[target]
n_inputs = 4
level_fns = quad_sum(1.1, -1); quad_sum(1.1, -1)
[data]
train_size = 64
test_size = 16
[architecture]
tree_units = 3
activation = abs
[search]
trials = 2
epochs = 50
step_min = 1e300
step_max = 1e300
)");
  EXPECT_EQ(run_cli("compare --config " + (dir / "div.ini").string() + " --out " + (dir / "o").string()).code, 2);
}

TEST(Cli, GenTrainCompareWriteArtifacts) {
  const auto dir = scratch("cli_ok");
  write_file(dir / "c.ini", kFig7Config);
  const auto cfg = (dir / "c.ini").string();
  EXPECT_EQ(run_cli("gen --config " + cfg + " --out " + (dir / "gen").string()).code, 0);
  std::ifstream train_csv(dir / "gen" / "train.csv");
  EXPECT_EQ(read_dataset_csv(train_csv).size(), 300u);
  EXPECT_EQ(run_cli("train --config " + cfg + " --arch shallow --out " + (dir / "train").string()).code, 0);
  EXPECT_TRUE(fs::exists(dir / "train" / "shallow.dat"));
  EXPECT_FALSE(fs::exists(dir / "train" / "deep.dat"));
  EXPECT_EQ(run_cli("compare --config " + cfg + " --out " + (dir / "cmp").string()).code, 0);
  // The CLI and the library agree byte for byte.
  const auto lib = dir / "lib";
  write_comparison(lib, run_compare(parse(kFig7Config)), "compare");
  EXPECT_EQ(slurp(dir / "cmp" / "comparison.csv"), slurp(lib / "comparison.csv"));
  // --seed re-derives every seed.
  EXPECT_EQ(run_cli("compare --config " + cfg + " --seed 8 --out " + (dir / "cmp8").string()).code, 0);
  EXPECT_NE(slurp(dir / "cmp8" / "comparison.csv"), slurp(lib / "comparison.csv"));
}

TEST(Cli, ReproCheckExitCodeMatchesVerdict) {
  const auto dir = scratch("cli_repro");
  const auto r = run_cli("repro fig7 --trials 1 --epochs 2 --samples 200 --check --out " + dir.string());
  const bool failed = r.out.find("FAIL ") != std::string::npos;
  EXPECT_EQ(r.code, failed ? 3 : 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "fig7" / "deep.dat"));
  EXPECT_TRUE(fs::exists(dir / "fig7" / "shallow.dat"));
}

TEST(Cli, BoundsTable) {
  const auto dir = scratch("cli_bounds");
  write_file(dir / "b.ini", "[bounds]\nn = 4\n");
  const auto r = run_cli("bounds --config " + (dir / "b.ini").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("shallow_complexity,n=4;m=2;eps=0.1,"), std::string::npos) << r.out;
  write_file(dir / "bad.ini", "[bounds]\nn = four\n");
  EXPECT_EQ(run_cli("bounds --config " + (dir / "bad.ini").string()).code, 1);
}

}  // namespace
}  // namespace compnet
