// Copyright 2026 The facescan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "facescan/classifier/boost.hpp"
#include "facescan/rng.hpp"

namespace facescan::classifier {
namespace {

TEST(Alpha, QuarterErrorGivesHalfLogThree) {
  EXPECT_NEAR(alpha_from_error(0.25), 0.5 * std::log(3.0), 1e-12);
  EXPECT_EQ(alpha_from_error(0.5), 0.0);
  EXPECT_GT(alpha_from_error(1e-10), 10.0);
}

// Exhaustive oracle: every threshold between consecutive distinct values
// (plus both ends), both polarities.
double brute_min_error(const std::vector<double>& v, const std::vector<int>& y, const std::vector<double>& w) {
  std::vector<double> cuts{*std::min_element(v.begin(), v.end()) - 1.0};
  for (double a : v) cuts.push_back(a);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double best = 1.0;
  for (double t : cuts)
    for (int pol : {1, -1}) {
      double err = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i)
        if ((pol * (v[i] - t) > 0 ? 1 : -1) != y[i]) err += w[i];
      best = std::min(best, err / total);
    }
  return best;
}

TEST(Stump, MatchesExhaustiveSearch) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 40));
    std::vector<double> v(n), w(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<double>(rng.uniform_int(0, 12));  // many ties
      y[i] = rng.uniform() < 0.5 ? 1 : -1;
      w[i] = rng.uniform(0.01, 1.0);
    }
    y[0] = 1;
    y[1] = -1;
    const auto s = train_stump(v, y, w);
    ASSERT_NEAR(s.error, brute_min_error(v, y, w), 1e-12);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (s.predict(v[i]) != y[i]) err += w[i];
    ASSERT_NEAR(err / std::accumulate(w.begin(), w.end(), 0.0), s.error, 1e-12);
  }
}

TEST(Stump, TieBreakPrefersSmallerThreshold) {
  // Cuts at 1.5 and 3.5 (both positive polarity) each misclassify one
  // sample of equal weight; every other cut does worse.
  const std::vector<double> v{1, 2, 3, 4};
  const std::vector<int> y{-1, 1, -1, 1};
  const std::vector<double> w{1, 1, 1, 1};
  const auto s = train_stump(v, y, w);
  EXPECT_NEAR(s.error, 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(s.threshold, 1.5);
  EXPECT_EQ(s.polarity, 1);
}

TEST(Stump, RejectsDegenerateInput) {
  const std::vector<double> v{1, 2};
  EXPECT_THROW(train_stump(v, std::vector<int>{1, 1}, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(train_stump(v, std::vector<int>{1, 0}, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(train_stump(v, std::vector<int>{1, -1}, std::vector<double>{0, 0}), Error);
}

struct Toy {
  std::vector<std::array<float, 2>> x;
  std::vector<std::int8_t> y;
};

// Positives in the upper-right quadrant: separable, but not by one stump.
Toy quadrant_toy(std::uint64_t seed, int n) {
  Rng rng(seed);
  Toy t;
  for (int i = 0; i < n; ++i) {
    const float a = static_cast<float>(rng.uniform()), b = static_cast<float>(rng.uniform());
    t.x.push_back({a, b});
    t.y.push_back(a > 0.5f && b > 0.5f ? 1 : -1);
  }
  return t;
}

TEST(AdaBoost, WeightsStayNormalizedAndToySetSeparates) {
  const auto toy = quadrant_toy(4, 200);
  const SortedFeatureMatrix m(2, toy.x.size(), [&](std::size_t f, std::span<float> out) {
    for (std::size_t i = 0; i < toy.x.size(); ++i) out[i] = toy.x[i][f];
  });
  AdaBoost boost(m, toy.y, AdaBoost::balanced_weights(toy.y));
  std::vector<double> score(toy.x.size(), 0.0);
  int rounds = 0;
  std::size_t errors = toy.x.size();
  while (rounds < 20 && errors > 0) {
    const auto pick = boost.step();
    ASSERT_TRUE(pick.has_value());
    ++rounds;
    const auto& w = boost.weights();
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    const auto h = stump_predictions(m, *pick);
    errors = 0;
    for (std::size_t i = 0; i < score.size(); ++i) {
      score[i] += pick->alpha * h[i];
      errors += (score[i] > 0 ? 1 : -1) != toy.y[i] ? 1 : 0;
    }
  }
  EXPECT_EQ(errors, 0u);
  EXPECT_LE(rounds, 20);
}

TEST(AdaBoost, BalancedWeightsSplitMassEvenly) {
  const std::vector<std::int8_t> y{1, -1, -1, -1};
  const auto w = AdaBoost::balanced_weights(y);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1] + w[2] + w[3], 0.5);
}

TEST(AdaBoost, ThreadCountDoesNotChangePicks) {
  const auto toy = quadrant_toy(9, 300);
  const auto fill = [&](std::size_t f, std::span<float> out) {
    for (std::size_t i = 0; i < toy.x.size(); ++i) out[i] = toy.x[i][f % 2] * static_cast<float>(1 + f / 2);
  };
  const SortedFeatureMatrix m1(8, toy.x.size(), fill, 1);
  const SortedFeatureMatrix m4(8, toy.x.size(), fill, 4);
  AdaBoost a(m1, toy.y, AdaBoost::balanced_weights(toy.y), 1);
  AdaBoost b(m4, toy.y, AdaBoost::balanced_weights(toy.y), 4);
  for (int r = 0; r < 10; ++r) {
    const auto pa = a.step(), pb = b.step();
    ASSERT_EQ(pa.has_value(), pb.has_value());
    if (!pa) break;
    EXPECT_EQ(pa->feature, pb->feature);
    EXPECT_EQ(pa->stump.threshold, pb->stump.threshold);
    EXPECT_EQ(pa->alpha, pb->alpha);
  }
}

}  // namespace
}  // namespace facescan::classifier
