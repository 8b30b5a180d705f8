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

#include <cmath>
#include <sstream>

#include "compnet/train.hpp"
#include "gradient_check.hpp"

namespace compnet {
namespace {

Dataset line_data(std::size_t m, std::uint64_t seed) {
  // y = 2 (x + 2)_+ on [-1, 1]: one always-active ReLU unit fits it exactly.
  Rng rng(seed);
  Dataset d;
  d.n_inputs = 1;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = rng.uniform(-1, 1);
    d.inputs.push_back(x);
    d.targets.push_back(2.0 * (x + 2.0));
  }
  return d;
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  std::vector<double> p = {0.5, -1.0}, g = {0.0, 0.0}, m(2, 0.0), v(2, 0.0);
  adam_step(p, g, m, v, 1, 0.1);
  EXPECT_EQ(p, (std::vector<double>{0.5, -1.0}));
}

TEST(Adam, ConstantGradientStepsAtStepSize) {
  // Bias correction makes m_hat = g and v_hat = g^2 exactly in exact
  // arithmetic, so every update is -step * g / (|g| + eps).
  std::vector<double> p = {0.0, 0.0}, m(2, 0.0), v(2, 0.0);
  const std::vector<double> g = {3.0, -0.25};
  const double step = 1e-3;
  double prev[2] = {0.0, 0.0};
  for (long t = 1; t <= 2000; ++t) {
    adam_step(p, g, m, v, t, step);
    EXPECT_NEAR(p[0] - prev[0], -step * 3.0 / (3.0 + 1e-8), 1e-12);
    EXPECT_NEAR(p[1] - prev[1], step * 0.25 / (0.25 + 1e-8), 1e-12);
    prev[0] = p[0];
    prev[1] = p[1];
  }
}

TEST(Adam, RejectsNonFiniteAndBadIndex) {
  std::vector<double> p = {0.0}, m(1, 0.0), v(1, 0.0);
  const std::vector<double> bad = {std::nan("")};
  EXPECT_THROW(adam_step(p, bad, m, v, 1, 0.1), DivergenceError);
  const std::vector<double> ok = {1.0};
  EXPECT_THROW(adam_step(p, ok, m, v, 0, 0.1), ValidationError);
}

TEST(Schedule, DecayIsExactPowerOfFloor) {
  HyperParams hp;
  hp.step_size = 0.01;
  hp.decay_rate = 0.7;
  hp.decay_every = 7;
  for (int e = 0; e < 100; ++e) {
    EXPECT_EQ(decayed_step_size(hp, e), 0.01 * std::pow(0.7, e / 7));
  }
  EXPECT_EQ(decayed_step_size(hp, 6), 0.01);
  EXPECT_EQ(decayed_step_size(hp, 7), 0.01 * 0.7);
}

TEST(HyperParams, Validation) {
  HyperParams hp;
  hp.epochs = 0;
  EXPECT_THROW(hp.validate(), ValidationError);
  hp = {};
  hp.decay_rate = 1.5;
  EXPECT_THROW(hp.validate(), ValidationError);
  hp = {};
  hp.step_size = -1;
  EXPECT_THROW(hp.validate(), ValidationError);
}

TEST(Mse, Cases) {
  ShallowNet zero{1, 1, Activation::kReLU, {0.0, 0.0, 0.0}};
  Dataset twos{1, {0.1, 0.5, -0.3}, {2.0, 2.0, 2.0}, 0.0, 0};
  EXPECT_EQ(mse(zero, twos), 4.0);
  ShallowNet exact{1, 1, Activation::kReLU, {1.0, 2.0, 2.0}};
  EXPECT_EQ(mse(exact, line_data(100, 1)), 0.0);
  const auto net = init({NetSpec::Kind::kTree, 8, 5, false, Activation::kReLU}, 3);
  Rng rng(4);
  Dataset d;
  d.n_inputs = 8;
  for (int i = 0; i < 5000; ++i) {
    for (int j = 0; j < 8; ++j) d.inputs.push_back(rng.uniform(-1, 1));
    d.targets.push_back(rng.normal());
  }
  const double oracle = testing_util::naive_mse(net, d);
  EXPECT_NEAR(mse(net, d), oracle, 1e-12 * oracle);
}

TEST(TrainRun, InterpolatingUnitConvergesMonotonically) {
  const auto data = line_data(256, 2);
  Network net = ShallowNet{1, 1, Activation::kReLU, {0.5, 1.0, 0.5}};
  HyperParams hp;
  hp.step_size = 2e-3;
  hp.decay_rate = 1.0;
  hp.batch_size = 256;
  hp.epochs = 3000;
  hp.patience = 0;
  const auto run = train_run(net, data, data, hp, 1);
  ASSERT_FALSE(run.diverged);
  EXPECT_EQ(run.train_curve.size(), 3000u);
  // Monotone until the loss reaches the rounding floor.
  for (std::size_t e = 1; e < run.train_curve.size() && run.train_curve[e - 1] > 1e-12; ++e) {
    EXPECT_LE(run.train_curve[e], run.train_curve[e - 1]) << "epoch " << e;
  }
  EXPECT_LT(run.final_train, 1e-6);
}

TEST(TrainRun, ConstantTargetIsFitted) {
  Dataset d;
  d.n_inputs = 2;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    d.inputs.push_back(rng.uniform(-1, 1));
    d.inputs.push_back(rng.uniform(-1, 1));
    d.targets.push_back(0.37);
  }
  Network net = ShallowNet{2, 1, Activation::kReLU, {0.0, 0.0, 1.0, 0.5}};
  HyperParams hp;
  hp.step_size = 1e-2;
  hp.batch_size = 32;
  hp.epochs = 300;
  const auto run = train_run(net, d, d, hp, 9);
  EXPECT_LT(run.final_train, 1e-8);
}

TEST(TrainRun, DeterministicAndCurvesMatchEpochsRun) {
  const auto data = line_data(300, 5);
  const auto net = init({NetSpec::Kind::kShallow, 1, 4, false, Activation::kSoftplus}, 2);
  HyperParams hp;
  hp.epochs = 40;
  hp.patience = 5;
  hp.min_improvement = 1e-3;
  const auto a = train_run(net, data, data, hp, 77);
  const auto b = train_run(net, data, data, hp, 77);
  EXPECT_EQ(a.train_curve, b.train_curve);
  EXPECT_EQ(params_of(a.params), params_of(b.params));
  EXPECT_EQ(a.train_curve.size(), a.test_curve.size());
  EXPECT_LE(a.train_curve.size(), 40u);
  EXPECT_EQ(a.final_train, a.train_curve.back());
}

TEST(TrainRun, DivergenceIsRecordedNotThrown) {
  const auto data = line_data(64, 5);
  // |.| units cannot die, so the blown-up weights reach the output.
  const auto net = init({NetSpec::Kind::kShallow, 1, 4, false, Activation::kAbs}, 2);
  HyperParams hp;
  hp.step_size = 1e300;
  hp.epochs = 50;
  const auto run = train_run(net, data, data, hp, 1);
  EXPECT_TRUE(run.diverged);
  EXPECT_FALSE(run.diagnostic.empty());
  EXPECT_TRUE(std::isinf(run.final_train));
}

TEST(TrainRun, RejectsDimensionMismatch) {
  const auto data = line_data(10, 1);
  const auto net = init({NetSpec::Kind::kShallow, 2, 4, false, Activation::kReLU}, 2);
  EXPECT_THROW(train_run(net, data, data, HyperParams{}, 1), ValidationError);
}

TEST(Selection, ArgminSkipsDivergedAndBreaksTiesEarly) {
  std::vector<RunRecord> records(4);
  records[0].final_train = 0.5;
  records[1].final_train = 0.1;
  records[1].diverged = true;
  records[2].final_train = 0.2;
  records[3].final_train = 0.2;
  EXPECT_EQ(select_best(records, Selection::kByTrain), 2u);
  for (auto& r : records) r.diverged = true;
  EXPECT_THROW(select_best(records, Selection::kByTrain), DivergenceError);
  EXPECT_EQ(parse_selection(to_string(Selection::kByValidation)), Selection::kByValidation);
  EXPECT_THROW(parse_selection("by_magic"), ValidationError);
}

TEST(SearchSpace, DrawsStayInBounds) {
  SearchSpace space;
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto hp = draw_hyperparams(space, rng);
    EXPECT_GE(hp.step_size, 1e-5);
    EXPECT_LE(hp.step_size, 1e-1);
    EXPECT_GE(hp.decay_rate, 0.5);
    EXPECT_LE(hp.decay_rate, 1.0);
    EXPECT_GE(hp.decay_every, 5);
    EXPECT_LE(hp.decay_every, 50);
    EXPECT_NE(std::find(space.batch_sizes.begin(), space.batch_sizes.end(), hp.batch_size),
              space.batch_sizes.end());
  }
  space.batch_sizes.clear();
  EXPECT_THROW(space.validate(), ValidationError);
}

class SearchTest : public ::testing::Test {
 protected:
  Dataset train_ = line_data(400, 1);
  Dataset test_ = line_data(200, 2);
  NetSpec spec_{NetSpec::Kind::kShallow, 1, 3, false, Activation::kReLU};
  SearchSpace space_ = [] {
    SearchSpace s;
    s.epochs = 15;
    s.patience = 0;
    return s;
  }();
};

TEST_F(SearchTest, SingleTrialIsBest) {
  SearchOptions opt;
  opt.trials = 1;
  opt.seed = 4;
  const auto r = random_search(spec_, train_, test_, space_, opt);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.best, 0u);
}

TEST_F(SearchTest, BestIsArgminAndDeterministicAcrossThreads) {
  SearchOptions opt;
  opt.trials = 6;
  opt.seed = 21;
  const auto a = random_search(spec_, train_, test_, space_, opt);
  opt.threads = 3;
  const auto b = random_search(spec_, train_, test_, space_, opt);
  EXPECT_EQ(a.best, b.best);
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    EXPECT_EQ(a.records[t].train_curve, b.records[t].train_curve);
    if (!a.records[t].diverged) {
      EXPECT_LE(a.best_record().final_train, a.records[t].final_train);
    }
  }
}

TEST_F(SearchTest, ValidationSelectionHoldsOutTwentyPercent) {
  SearchOptions opt;
  opt.trials = 3;
  opt.seed = 5;
  opt.selection = Selection::kByValidation;
  const auto r = random_search(spec_, train_, test_, space_, opt);
  for (const auto& rec : r.records) {
    if (!rec.diverged) {
      EXPECT_TRUE(std::isfinite(rec.final_val));
    }
  }
  const auto [fit, val] = split_holdout(train_, 0.2, 1);
  EXPECT_EQ(fit.size(), 320u);
  EXPECT_EQ(val.size(), 80u);
  opt.holdout_fraction = 0.0;
  EXPECT_THROW(random_search(spec_, train_, test_, space_, opt), ValidationError);
}

TEST_F(SearchTest, CsvLayouts) {
  SearchOptions opt;
  opt.trials = 2;
  opt.seed = 3;
  const auto r = random_search(spec_, train_, test_, space_, opt);
  std::stringstream curves, summary;
  write_curves_csv(curves, r.records);
  write_summary_csv(summary, r.records);
  std::string line;
  std::getline(curves, line);
  EXPECT_EQ(line, "trial,epoch,train_mse,test_mse");
  std::getline(summary, line);
  EXPECT_EQ(line, "trial,step_size,decay_rate,decay_every,batch_size,final_train,final_val,final_test,diverged");
  int rows = 0;
  while (std::getline(summary, line)) ++rows;
  EXPECT_EQ(rows, 2);
}

}  // namespace
}  // namespace compnet
