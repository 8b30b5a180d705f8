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

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <sstream>

#include "compnet/bounds.hpp"

namespace compnet {
namespace {

using boost::multiprecision::cpp_int;

cpp_int factorial(unsigned n) {
  cpp_int f = 1;
  for (unsigned i = 2; i <= n; ++i) f *= i;
  return f;
}

cpp_int to_cpp_int(uint128 v) {
  cpp_int out = static_cast<std::uint64_t>(v >> 64);
  out <<= 64;
  out += static_cast<std::uint64_t>(v);
  return out;
}

TEST(Complexity, SpotValues) {
  EXPECT_NEAR(shallow_complexity(4, 2, 0.1), 100.0, 1e-10);
  EXPECT_NEAR(deep_complexity(4, 2, 0.1), 30.0, 1e-10);
  EXPECT_NEAR(shallow_complexity(8, 1, 0.1), 1e8, 1e-4);
  EXPECT_NEAR(deep_complexity(8, 1, 0.1), 700.0, 1e-9);
}

TEST(Complexity, RatioVanishesWithDimension) {
  // (n-1) 2^(1-n/2) at eps = 0.5 peaks at n = 4, then falls.
  double previous = INFINITY;
  for (int n = 5; n <= 60; ++n) {
    const double ratio = deep_complexity(n, 2, 0.5) / shallow_complexity(n, 2, 0.5);
    EXPECT_LT(ratio, previous);
    previous = ratio;
  }
  EXPECT_LT(previous, 1e-6);
}

TEST(Complexity, ShallowStrictlyIncreasingInN) {
  for (double eps : {0.01, 0.3, 0.9}) {
    for (int n = 1; n < 40; ++n) EXPECT_LT(shallow_complexity(n, 2, eps), shallow_complexity(n + 1, 2, eps));
  }
}

TEST(Complexity, DeepBelowShallowPastThreshold) {
  for (int n = 3; n <= 20; ++n) {
    for (double m : {1.0, 2.0, 3.0}) {
      const double threshold = std::pow(n - 1.0, -m / (n - 2.0));
      for (double frac : {0.01, 0.5, 0.99}) {
        const double eps = threshold * frac;
        EXPECT_LT(deep_complexity(n, m, eps), shallow_complexity(n, m, eps)) << n << " " << m << " " << eps;
      }
    }
  }
}

TEST(Complexity, Validation) {
  EXPECT_THROW(shallow_complexity(4, 2, 1.0), ValidationError);
  EXPECT_THROW(shallow_complexity(4, 0, 0.1), ValidationError);
  EXPECT_THROW(deep_complexity(1, 2, 0.1), ValidationError);
}

TEST(DagComplexity, TreeChainAndSingleNode) {
  const auto tree = build_binary_tree(8, {Product{}, Product{}, Product{}});
  const std::vector<double> m(7, 2.0);
  const auto c = dag_complexity(tree, m, 0.1);
  EXPECT_NEAR(c.deep, 70.0, 1e-9);
  EXPECT_NEAR(c.shallow, 1e4, 1e-7);

  const auto single = build_binary_tree(2, {Product{}});
  const std::vector<double> m1 = {3.0};
  const auto s = dag_complexity(single, m1, 0.1);
  EXPECT_NEAR(s.deep, shallow_complexity(2, 3, 0.1), 1e-9);

  const auto chain = build_dag({{0, {Source::input(0), Source::input(1)}, Quadratic{1, 0, -1, 0, 0, 0}},
                                {1, {Source::node(0)}, AbsValue{}}},
                               2);
  const std::vector<double> mc = {4.0, 1.0};  // inner bivariate m=4, outer unary m=1
  EXPECT_NEAR(dag_complexity(chain, mc, 0.1).deep, std::pow(0.1, -2.0 / 4) + std::pow(0.1, -1.0 / 1), 1e-12);
  EXPECT_THROW(dag_complexity(chain, m1, 0.1), ValidationError);
}

TEST(LipschitzComplexity, SpotValuesAndScaling) {
  auto a = lipschitz_complexity(2, 1, 0.5);
  EXPECT_EQ(a.shallow, 4.0);
  EXPECT_EQ(a.deep, 4.0);
  a = lipschitz_complexity(8, 1, 0.5);
  EXPECT_EQ(a.shallow, 256.0);
  EXPECT_EQ(a.deep, 28.0);
  EXPECT_EQ(lipschitz_complexity(8, 2, 0.5).deep, 4 * a.deep);
}

TEST(Gap, SpotValues) {
  auto g = gap_bounds(20, 2);
  EXPECT_EQ(g.shallow_lower, std::ldexp(1.0, -20));
  EXPECT_NEAR(g.shallow_lower, 9.54e-7, 1e-9);
  EXPECT_EQ(g.deep_upper, 2.5e-3);
  EXPECT_EQ(gap_bounds(1, 2).shallow_lower, 0.5);
  EXPECT_THROW(gap_bounds(0.5, 2), ValidationError);
}

TEST(Gap, LowerStrictlyDecreasingAndCrossover) {
  for (double n : {2.0, 4.0, 8.0, 16.0}) {
    for (int N = 1; N < 200; ++N) EXPECT_GT(gap_bounds(N, n).shallow_lower, gap_bounds(N + 1, n).shallow_lower);
    const double c = gap_crossover(n);
    for (double N = c + 1e-6; N < c + 500; N += 0.37) {
      const auto g = gap_bounds(N, n);
      EXPECT_LE(g.shallow_lower, g.deep_upper * (1 + 1e-12)) << n << " " << N;
    }
    if (c > 1.0) {
      const auto g = gap_bounds(c * (1 - 1e-6), n);
      EXPECT_GT(g.shallow_lower, g.deep_upper);
    }
  }
}

TEST(EffectiveDimension, Cases) {
  EXPECT_EQ(effective_dimension(8, 2, false), 4.0);
  EXPECT_EQ(effective_dimension(8, 2, true), 1.0);
  EXPECT_EQ(effective_dimension(2, 2, false), 1.0);
  EXPECT_EQ(effective_dimension(2, 2, true), 1.0);
}

TEST(Monomials, SpotValues) {
  EXPECT_EQ(static_cast<std::uint64_t>(monomial_counts(2, 3).shallow), 10u);
  EXPECT_EQ(static_cast<std::uint64_t>(monomial_counts(8, 2).tree), 42u);
  EXPECT_EQ(static_cast<std::uint64_t>(monomial_counts(1, 1).shallow), 2u);
  EXPECT_EQ(to_string(monomial_counts(64, 64).shallow), "23951146041928082866135587776380551750");
  EXPECT_THROW(monomial_counts(0, 3), ValidationError);
}

TEST(Monomials, ExactAgainstFactorialOracle) {
  for (unsigned n = 1; n <= 64; ++n) {
    for (unsigned k = 1; k <= 64; ++k) {
      const auto c = monomial_counts(n, k);
      EXPECT_EQ(to_cpp_int(c.shallow), factorial(n + k) / (factorial(n) * factorial(k))) << n << "," << k;
      EXPECT_EQ(to_cpp_int(c.tree), cpp_int(n - 1) * factorial(k + 2) / (2 * factorial(k)));
    }
  }
}

TEST(Monomials, OverflowIsAnErrorNotAWrap) {
  EXPECT_THROW(binomial(300, 150), std::overflow_error);
  EXPECT_NO_THROW(binomial(130, 65));
  EXPECT_EQ(to_cpp_int(binomial(130, 65)), factorial(130) / (factorial(65) * factorial(65)));
}

TEST(Generalization, SpotValues) {
  GeneralizationQuery q;
  q.epsilon_G = 0.1;
  q.delta = 0.1;
  q.k_bits = 32;
  q.W = 1000;
  q.n = 1e4;
  q.epsilon = 0.1;
  const auto s = generalization_suite(q);
  const double sample_bound = 2.0 / 0.01 * (32000 * std::log(2.0) + std::log(20.0));
  EXPECT_NEAR(s.sample_bound, sample_bound, 1e-9 * sample_bound);
  EXPECT_NEAR(s.sample_bound, 4.436e6, 1e3);
  EXPECT_EQ(s.log10_sample_ratio, -1e4);
  EXPECT_EQ(s.sample_ratio, 0.0);  // underflows; the log form carries the value
}

TEST(Generalization, TradeoffFormulas) {
  GeneralizationQuery q;
  q.M = 1e6;
  q.n = 8;
  q.m = 2;
  const auto s = generalization_suite(q);
  EXPECT_NEAR(s.r_shallow, std::pow(1e3 / 8, 8.0 / 10), 1e-9 * s.r_shallow);
  EXPECT_NEAR(s.r_deep, std::pow(1e3, 2.0 / 4), 1e-9 * s.r_deep);
  EXPECT_NEAR(s.err_shallow, std::pow(8 / 1e3, 2.0 / 10), 1e-12);
  EXPECT_NEAR(s.err_deep, std::pow(1e-3, 2.0 / 4), 1e-12);
  q.n = 1000;
  EXPECT_EQ(generalization_suite(q).err_deep, s.err_deep);
}

TEST(Hvq, Values) {
  EXPECT_EQ(hvq_memory(100).vq, 400u);
  EXPECT_EQ(hvq_memory(100).hvq, 108u);
  EXPECT_EQ(hvq_memory(8).vq, 32u);
  EXPECT_EQ(hvq_memory(8).hvq, 16u);
  for (std::uint64_t n = 4; n <= 1000; n += 2) EXPECT_LT(hvq_memory(n).hvq, hvq_memory(n).vq);
  EXPECT_EQ(hvq_memory(2).hvq, 10u);
  EXPECT_GT(hvq_memory(2).hvq, hvq_memory(2).vq);
  EXPECT_THROW(hvq_memory(7), ValidationError);
}

TEST(Table, CsvHeaderAndRowCount) {
  const auto rows = bounds_table(BoundsQuery{});
  std::stringstream ss;
  write_bounds_csv(ss, rows);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "formula,inputs,value,log10_value");
  std::size_t count = 0;
  while (std::getline(ss, line)) ++count;
  EXPECT_EQ(count, rows.size());
  for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.log10_value)) << r.formula;
}

}  // namespace
}  // namespace compnet
