/*
 * Copyright 2026 The memdos Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "memdos/ks.hpp"

using namespace memdos;

namespace
{
std::vector<double> draw(std::mt19937_64& rng, std::size_t n)
{
  std::normal_distribution<double> d(1000.0, 50.0);
  std::vector<double> v(n);
  for (double& x : v)
    x = std::max(0.0, d(rng));
  return v;
}

SampleWindow window(std::vector<double> v)
{
  SampleWindow w;
  w.values = std::move(v);
  return w;
}

double count_le(const std::vector<double>& v, double x)
{
  return static_cast<double>(std::count_if(v.begin(), v.end(), [x](double y) { return y <= x; })) /
         static_cast<double>(v.size());
}
} // namespace

TEST(Ecdf, SinglePoint)
{
  const Ecdf f({5.0});
  EXPECT_EQ(f(4.9), 0.0);
  EXPECT_EQ(f(5.0), 1.0);
  EXPECT_EQ(f.left(5.0), 0.0);
}

TEST(Ecdf, Limits)
{
  const Ecdf f({1, 2, 3, 4});
  EXPECT_EQ(f(2.5), 0.5);
  EXPECT_EQ(f(-std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_EQ(f(std::numeric_limits<double>::infinity()), 1.0);
}

TEST(Ecdf, MatchesCounting)
{
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(0, 30);
  std::vector<double> v(100);
  for (double& x : v)
    x = d(rng);
  const Ecdf f(v);
  for (double x : v) {
    EXPECT_EQ(f(x), count_le(v, x));
    EXPECT_EQ(f(x + 0.5), count_le(v, x + 0.5));
  }
}

TEST(Ecdf, RejectsBadInput)
{
  EXPECT_THROW(Ecdf({}), std::invalid_argument);
  EXPECT_THROW(Ecdf({1.0, std::nan("")}), std::invalid_argument);
}

TEST(KsStatistic, Examples)
{
  const std::vector<double> a{1, 2};
  const std::vector<double> b{1.5, 2.5};
  EXPECT_DOUBLE_EQ(ks_statistic(a, b), 0.5);
  EXPECT_EQ(ks_statistic(a, a), 0.0);
  const std::vector<double> lo{1, 2, 3};
  const std::vector<double> hi{10, 11};
  EXPECT_EQ(ks_statistic(lo, hi), 1.0);
  EXPECT_EQ(ks_statistic(hi, lo), 1.0);
}

TEST(KsStatistic, HandlesTies)
{
  const std::vector<double> a{1, 1, 1, 2};
  const std::vector<double> b{1, 2, 2, 2};
  EXPECT_DOUBLE_EQ(ks_statistic(a, b), 0.5);
}

TEST(KsStatistic, MatchesGridSup)
{
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> d(0, 100);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(60);
    std::vector<double> b(45);
    for (double& x : a)
      x = d(rng);
    for (double& x : b)
      x = d(rng) / 2 + 25;
    // Integer data: a grid with step 0.01 contains every jump point exactly.
    double grid = 0;
    for (int i = 0; i <= 10000; ++i) {
      const double x = (i * 100.0) / 10000.0;
      grid = std::max(grid, std::abs(count_le(a, x) - count_le(b, x)));
    }
    EXPECT_NEAR(ks_statistic(a, b), grid, 1e-12);
  }
}

TEST(KsStatistic, InvariantUnderMonotoneTransformAndPermutation)
{
  std::mt19937_64 rng(5);
  auto a = draw(rng, 100);
  auto b = draw(rng, 80);
  for (double& x : b)
    x += 20;
  const double d = ks_statistic(a, b);
  EXPECT_GT(d, 0.0);
  EXPECT_LE(d, 1.0);
  auto ta = a;
  auto tb = b;
  for (double& x : ta)
    x = std::log1p(x) * 3 + 7;
  for (double& x : tb)
    x = std::log1p(x) * 3 + 7;
  EXPECT_DOUBLE_EQ(ks_statistic(ta, tb), d);
  std::shuffle(a.begin(), a.end(), rng);
  std::reverse(b.begin(), b.end());
  EXPECT_DOUBLE_EQ(ks_statistic(a, b), d);
}

TEST(KsStatistic, WindowValidation)
{
  EXPECT_THROW(window({1.0}).validate(), std::invalid_argument);
  EXPECT_THROW(window({1.0, -1.0}).validate(), std::invalid_argument);
  EXPECT_THROW(window({1.0, std::numeric_limits<double>::infinity()}).validate(), std::invalid_argument);
  EXPECT_NO_THROW(window({0.0, 3.0}).validate());
  EXPECT_THROW(ks_statistic(window({1.0}), window({1.0, 2.0})), std::invalid_argument);
  const std::vector<double> empty;
  const std::vector<double> one{1.0};
  EXPECT_THROW(ks_statistic(empty, one), std::invalid_argument);
}

TEST(KsCritical, Values)
{
  EXPECT_NEAR(ks_critical(100, 100, 0.001), 0.276, 0.001);
  const double expected = std::sqrt(0.02) * std::sqrt(-0.5 * std::log(0.0005));
  EXPECT_DOUBLE_EQ(ks_critical(100, 100, 0.001), expected);
  EXPECT_EQ(ks_critical(30, 70, 0.05), ks_critical(70, 30, 0.05));
  EXPECT_LT(ks_critical(100, 100, 0.01), ks_critical(100, 100, 0.001));
  EXPECT_LT(ks_critical(200, 200, 0.01), ks_critical(100, 100, 0.01));
}

TEST(KsCritical, Domain)
{
  EXPECT_THROW(ks_critical(0, 10, 0.05), std::invalid_argument);
  EXPECT_THROW(ks_critical(10, 0, 0.05), std::invalid_argument);
  EXPECT_THROW(ks_critical(10, 10, 0.0), std::invalid_argument);
  EXPECT_THROW(ks_critical(10, 10, 1.0), std::invalid_argument);
  EXPECT_THROW(ks_critical(10, 10, std::nan("")), std::invalid_argument);
}

TEST(KsDecide, Verdicts)
{
  std::vector<double> lo(100);
  std::vector<double> hi(100);
  for (int i = 0; i < 100; ++i) {
    lo[i] = i;
    hi[i] = 1000 + i;
  }
  const KsDecision same = ks_decide(window(lo), window(lo), 0.001);
  EXPECT_FALSE(same.reject);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_STREQ(same.verdict(), "accept");
  const KsDecision apart = ks_decide(window(lo), window(hi), 0.001);
  EXPECT_TRUE(apart.reject);
  EXPECT_EQ(apart.statistic, 1.0);
  EXPECT_EQ(apart.alpha, 0.001);
  EXPECT_EQ(apart.critical, ks_critical(100, 100, 0.001));
}

TEST(KsDecide, RejectIffAboveCritical)
{
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = draw(rng, 100);
    auto b = draw(rng, 100);
    for (double& x : b)
      x += trial % 40;
    const KsDecision k = ks_decide(a, b, 0.001);
    EXPECT_EQ(k.reject, k.statistic > k.critical);
  }
}

TEST(KsDecide, NullRejectionRate)
{
  std::mt19937_64 rng(2026);
  int rejects = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto a = draw(rng, 100);
    const auto b = draw(rng, 100);
    rejects += ks_decide(a, b, 0.001).reject ? 1 : 0;
  }
  EXPECT_LE(static_cast<double>(rejects) / trials, 0.005);
  EXPECT_GE(1.0 - static_cast<double>(rejects) / trials, 0.99);
}
