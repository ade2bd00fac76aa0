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

#include "facescan/imaging.hpp"
#include "facescan/rng.hpp"

namespace facescan {
namespace {

GrayImage random_image(Rng& rng, int w, int h) {
  GrayImage g(w, h);
  for (auto& v : g.pixels()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return g;
}

std::int64_t brute_sum(const GrayImage& g, const Rect& r) {
  std::int64_t s = 0;
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) s += g.at(x, y);
  return s;
}

TEST(Integral, RectSumMatchesBruteForce) {
  Rng rng(11);
  for (int img = 0; img < 40; ++img) {
    const auto g = random_image(rng, static_cast<int>(rng.uniform_int(1, 48)), static_cast<int>(rng.uniform_int(1, 48)));
    const IntegralImage ii(g);
    for (int k = 0; k < 30; ++k) {
      const int x = static_cast<int>(rng.uniform_int(0, g.width()));
      const int y = static_cast<int>(rng.uniform_int(0, g.height()));
      const Rect r{x, y, static_cast<int>(rng.uniform_int(0, g.width() - x)),
                   static_cast<int>(rng.uniform_int(0, g.height() - y))};
      ASSERT_EQ(rect_sum(ii, r), brute_sum(g, r));
    }
  }
}

TEST(Integral, SaturatedImageHasNoOverflow) {
  const GrayImage g(4096, 4096, 255);
  const IntegralImage ii(g);
  EXPECT_EQ(rect_sum(ii, {0, 0, 4096, 4096}), std::int64_t{255} * 4096 * 4096);
  EXPECT_EQ(ii.square_sum_unchecked(0, 0, 4096, 4096), std::int64_t{255 * 255} * 4096 * 4096);
}

TEST(Integral, RejectsRectsOutsideImage) {
  const IntegralImage ii(GrayImage(8, 8));
  EXPECT_THROW(rect_sum(ii, {4, 4, 5, 1}), Error);
  EXPECT_THROW(rect_sum(ii, {-1, 0, 1, 1}), Error);
}

TEST(Integral, WindowStatsMatchDirectComputation) {
  Rng rng(5);
  const auto g = random_image(rng, 30, 30);
  const IntegralImage ii(g);
  const Rect r{3, 4, 20, 17};
  double sum = 0.0, sq = 0.0;
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) sum += g.at(x, y);
  const double mean = sum / r.area();
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) sq += (g.at(x, y) - mean) * (g.at(x, y) - mean);
  const auto s = window_stats(ii, r);
  EXPECT_NEAR(s.mean, mean, 1e-9);
  EXPECT_NEAR(s.raw_stddev, std::sqrt(sq / r.area()), 1e-6);
}

TEST(Integral, FlatWindowStddevIsFloored) {
  const IntegralImage ii(GrayImage(10, 10, 77));
  const auto s = window_stats(ii, {0, 0, 10, 10});
  EXPECT_EQ(s.raw_stddev, 0.0);
  EXPECT_EQ(s.stddev, 1.0);
}

TEST(Haar, ResponseMatchesCellSums) {
  Rng rng(8);
  const auto g = random_image(rng, 40, 40);
  const IntegralImage ii(g);
  const HaarFeature f{HaarKind::kThreeRectH, {3, 5, 12, 7}};
  // Oracle: white cells +1, middle cell -2, over cells of width 4.
  const double white = static_cast<double>(brute_sum(g, {10 + 3, 2 + 5, 4, 7}) + brute_sum(g, {10 + 11, 2 + 5, 4, 7}));
  const double black = static_cast<double>(brute_sum(g, {10 + 7, 2 + 5, 4, 7}));
  EXPECT_NEAR(eval_haar(ii, f, 10, 2, 1.0, 0.5), (white - 2.0 * black) / 84.0 * 0.5, 1e-9);
}

TEST(Haar, ConstantImageGivesZeroForEveryKind) {
  const IntegralImage ii(GrayImage(60, 60, 200));
  for (auto k : {HaarKind::kTwoRectH, HaarKind::kTwoRectV, HaarKind::kThreeRectH, HaarKind::kThreeRectV, HaarKind::kFourRect}) {
    const auto grid = haar_grid(k);
    const HaarFeature f{k, {1, 1, 6 * grid.cols, 6 * grid.rows}};
    for (double scale : {1.0, 1.25, 1.5625, 2.44140625}) EXPECT_EQ(eval_haar(ii, f, 0, 0, scale, 1.0), 0.0) << to_string(k);
  }
}

TEST(Haar, ScaledFeatureStaysInsideWindow) {
  for (const auto& k : {HaarKind::kTwoRectH, HaarKind::kFourRect}) {
    const auto grid = haar_grid(k);
    const HaarFeature f{k, {24 - 2 * grid.cols, 24 - 2 * grid.rows, 2 * grid.cols, 2 * grid.rows}};
    for (double scale = 1.0; scale < 4.0; scale *= 1.25) {
      const auto s = scale_haar(f, scale);
      const int window = scaled_window(24, scale);
      for (int i = 0; i < s.count; ++i) {
        EXPECT_LE(s.cells[i].x + s.cells[i].w, window);
        EXPECT_LE(s.cells[i].y + s.cells[i].h, window);
      }
    }
  }
}

TEST(Bbf, ComparesRectMeans) {
  GrayImage g(24, 24, 10);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) g.at(x, y) = 200;
  const IntegralImage ii(g);
  EXPECT_EQ(eval_bbf(ii, {{0, 0, 4, 4}, {10, 10, 4, 4}}, 0, 0, 1.0), 1);
  EXPECT_EQ(eval_bbf(ii, {{10, 10, 4, 4}, {0, 0, 4, 4}}, 0, 0, 1.0), 0);
  EXPECT_EQ(eval_bbf(ii, {{10, 10, 4, 4}, {14, 14, 4, 4}}, 0, 0, 1.0), 0);  // tie
}

TEST(Raster, LumaUsesBt601Weights) {
  EXPECT_EQ(luma(255, 255, 255), 255);
  EXPECT_EQ(luma(0, 0, 0), 0);
  EXPECT_EQ(luma(255, 0, 0), 76);   // 76.245
  EXPECT_EQ(luma(0, 255, 0), 150);  // 149.685
  EXPECT_EQ(luma(0, 0, 255), 29);   // 29.07
  const RgbImage rgb{2, 1, {255, 0, 0, 0, 0, 255}};
  const auto g = to_grayscale(rgb);
  EXPECT_EQ(g.at(0, 0), 76);
  EXPECT_EQ(g.at(1, 0), 29);
}

TEST(Raster, CropFillsOutsidePixels) {
  GrayImage g(4, 4, 9);
  const auto c = crop(g, {2, 2, 4, 4}, 1);
  EXPECT_EQ(c.at(0, 0), 9);
  EXPECT_EQ(c.at(3, 3), 1);
}

TEST(Raster, ResampleAreaAveragesBlocks) {
  Rng rng(2);
  const auto g = random_image(rng, 12, 12);
  const auto small = resample_area(g, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double mean = static_cast<double>(brute_sum(g, {3 * x, 3 * y, 3, 3})) / 9.0;
      EXPECT_EQ(small.at(x, y), static_cast<std::uint8_t>(std::lround(mean)));
    }
  const auto same = resample_area(g, 12, 12);
  EXPECT_EQ(same.pixels().size(), g.pixels().size());
  EXPECT_TRUE(std::equal(same.pixels().begin(), same.pixels().end(), g.pixels().begin()));
}

TEST(Raster, ResampleFractionalBoxOfConstantIsConstant) {
  const GrayImage g(50, 50, 123);
  const auto r = resample_area(g, 3.3, 7.9, 31.7, 29.1, 24, 24);
  for (auto v : r.pixels()) EXPECT_EQ(v, 123);
}

}  // namespace
}  // namespace facescan
