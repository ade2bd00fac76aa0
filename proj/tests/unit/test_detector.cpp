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
#include <deque>
#include <set>

#include "facescan/detector/ensemble.hpp"
#include "facescan/rng.hpp"
#include "facescan/tiles/terrain.hpp"
#include "support.hpp"

namespace facescan::detector {
namespace {

// A cascade with no stages accepts every window it is shown.
classifier::Cascade accept_all() { return {}; }

GrayImage noise(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage g(w, h);
  for (auto& v : g.pixels()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return g;
}

TEST(Scan, ScalesAreGeometricAndBounded) {
  ScanParams p;
  p.scale_factor = 1.25;
  const auto s = scan_scales(100, 60, 24, p);
  ASSERT_FALSE(s.empty());
  EXPECT_DOUBLE_EQ(s.front(), 1.0);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_NEAR(s[i] / s[i - 1], 1.25, 1e-12);
  EXPECT_LE(scaled_window(24, s.back()), 60);
  EXPECT_GT(scaled_window(24, s.back() * 1.25), 60);
  p.max_window = 40;
  for (double v : scan_scales(100, 60, 24, p)) EXPECT_LE(scaled_window(24, v), 40);
  p.max_window = 0;
  p.min_window = 30;
  for (double v : scan_scales(100, 60, 24, p)) EXPECT_GE(scaled_window(24, v), 30);
  EXPECT_TRUE(scan_scales(20, 20, 24, ScanParams{}).empty());
  p.scale_factor = 1.0;
  EXPECT_THROW(scan_scales(100, 100, 24, p), Error);
}

TEST(Scan, AcceptAllWindowCountMatchesAnalyticGrid) {
  const auto g = noise(97, 83, 1);
  ScanParams p;
  p.skip_low_variance = false;
  p.step_base = 2.0;
  const auto r = scan_integral(IntegralImage(g), accept_all(), p);
  std::uint64_t expected = 0;
  for (double s : scan_scales(97, 83, 24, p)) {
    const int win = scaled_window(24, s);
    const int step = p.step_at(s);
    expected += static_cast<std::uint64_t>((97 - win) / step + 1) * static_cast<std::uint64_t>((83 - win) / step + 1);
  }
  EXPECT_EQ(r.stats.windows_evaluated, expected);
  EXPECT_EQ(r.stats.accepted, expected);
  EXPECT_EQ(r.detections.size(), expected);
}

TEST(Scan, GridStartAlignsToGlobalMultiples) {
  for (std::int64_t off : {0, 1, 5, 7, 12, -3, 4097})
    for (int step : {1, 2, 3, 5}) {
      const int s = detail::grid_start(off, step);
      EXPECT_GE(s, 0);
      EXPECT_LT(s, step);
      EXPECT_EQ(((off + s) % step + step) % step, 0);
    }
}

TEST(Scan, OverlappingCropsSeeTheSameWindows) {
  const auto g = noise(120, 90, 2);
  ScanParams p;
  p.skip_low_variance = false;
  p.step_base = 3.0;
  const auto full = scan_integral(IntegralImage(g), accept_all(), p);
  const auto sub = crop(g, {17, 11, 80, 70});
  const auto part = scan_integral(IntegralImage(sub), accept_all(), p, "", 17, 11);
  std::set<std::tuple<double, double, double>> all;
  for (const auto& d : full.detections) all.insert({d.bbox.x, d.bbox.y, d.bbox.w});
  ASSERT_FALSE(part.detections.empty());
  for (const auto& d : part.detections) EXPECT_TRUE(all.count({d.bbox.x, d.bbox.y, d.bbox.w})) << d.bbox.x << "," << d.bbox.y;
}

TEST(Scan, FlatWindowsAreSkipped) {
  const GrayImage g(64, 64, 128);
  const auto r = scan_integral(IntegralImage(g), accept_all(), ScanParams{});
  EXPECT_EQ(r.stats.windows_evaluated, 0u);
  EXPECT_GT(r.stats.windows_skipped, 0u);
}

TEST(Scan, ThreadCountDoesNotChangeOutput) {
  const auto terrain = tiles::terrain_pool(1, 256, 4242).front();
  ScanParams p;
  p.step_base = 1.0;
  const IntegralImage ii(terrain);
  const auto a = scan_integral(ii, testing::tiny_model(), p, "t");
  p.threads = 4;
  const auto b = scan_integral(ii, testing::tiny_model(), p, "t");
  EXPECT_EQ(a.detections, b.detections);
  EXPECT_EQ(a.stats.windows_evaluated, b.stats.windows_evaluated);
  EXPECT_EQ(a.stats.rejections, b.stats.rejections);
  std::uint64_t rejected = 0;
  for (auto v : a.stats.rejections) rejected += v;
  EXPECT_EQ(rejected + a.stats.accepted, a.stats.windows_evaluated);
}

TEST(Group, IouKnownValues) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 10, 10}), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {10, 0, 10, 10}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 0, 0}, {0, 0, 0, 0}), 0.0);
}

// Oracle: breadth-first search over the full O(n^2) adjacency.
std::vector<std::vector<std::size_t>> bfs_components(const std::vector<BBox>& b, double t) {
  std::vector<int> comp(b.size(), -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < b.size(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> members;
    std::deque<std::size_t> q{s};
    comp[s] = static_cast<int>(out.size());
    while (!q.empty()) {
      const auto i = q.front();
      q.pop_front();
      members.push_back(i);
      for (std::size_t j = 0; j < b.size(); ++j)
        if (comp[j] < 0 && iou(b[i], b[j]) >= t) {
          comp[j] = comp[s];
          q.push_back(j);
        }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

TEST(Group, ComponentsMatchBfsOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BBox> boxes;
    const auto n = rng.uniform_int(0, 80);
    for (std::int64_t i = 0; i < n; ++i) {
      const double w = rng.uniform(5.0, 40.0);
      boxes.push_back({rng.uniform(0.0, 200.0), rng.uniform(0.0, 200.0), w, w * rng.uniform(0.8, 1.2)});
    }
    for (double t : {0.1, 0.3, 0.5}) ASSERT_EQ(box_components(boxes, t), bfs_components(boxes, t));
  }
}

std::vector<Detection> cluster(double x, double y, double w, int n, const std::string& id, double score) {
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) out.push_back({{x + i, y + (i % 2), w, w}, score + i * 0.01, id, 1.0});
  return out;
}

TEST(Group, MinNeighborsFiltersAndBoxesAverage) {
  auto dets = cluster(10, 10, 24, 3, "a", 1.0);
  const auto lone = cluster(200, 200, 24, 1, "a", 5.0);
  dets.insert(dets.end(), lone.begin(), lone.end());
  GroupParams gp;
  gp.min_neighbors = 2;
  const auto g = group_detections(dets, gp);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].neighbor_count, 3);
  EXPECT_DOUBLE_EQ(g[0].bbox.x, 11.0);
  EXPECT_DOUBLE_EQ(g[0].bbox.y, 10.0 + 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(g[0].best_score.at("a"), 1.02);
}

TEST(Group, GroupingIsIdempotent) {
  Rng rng(3);
  std::vector<Detection> dets;
  for (int i = 0; i < 300; ++i) {
    const double w = rng.uniform(20.0, 60.0);
    dets.push_back({{rng.uniform(0.0, 400.0), rng.uniform(0.0, 400.0), w, w}, rng.uniform(), i % 3 ? "a" : "b", 1.0});
  }
  GroupParams gp;
  gp.min_neighbors = 1;
  const auto once = group_detections(dets, gp);
  std::vector<Detection> again;
  for (const auto& g : once) again.push_back({g.bbox, g.max_score(), "a", 1.0});
  const auto twice = group_detections(again, gp);
  ASSERT_EQ(twice.size(), once.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(twice[i].bbox, once[i].bbox);
  for (std::size_t i = 0; i < once.size(); ++i)
    for (std::size_t j = i + 1; j < once.size(); ++j) EXPECT_LT(iou(once[i].bbox, once[j].bbox), gp.iou_min);
}

TEST(Group, ConsensusOrderRanksAgreementFirst) {
  auto dets = cluster(10, 10, 24, 3, "a", 9.0);
  for (const auto& d : cluster(300, 300, 30, 2, "a", 1.0)) dets.push_back(d);
  for (const auto& d : cluster(301, 300, 30, 2, "b", 1.0)) dets.push_back(d);
  auto g = group_detections(dets, GroupParams{0.3, 2});
  ASSERT_EQ(g.size(), 2u);
  std::sort(g.begin(), g.end(), consensus_order);
  EXPECT_EQ(g[0].consensus(), 2);
  EXPECT_EQ(g[0].detector_ids(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(g[1].consensus(), 1);
}

TEST(Ensemble, RequiresDetectorsAndKeepsPerDetectorStats) {
  const auto terrain = tiles::terrain_pool(1, 128, 77).front();
  EXPECT_THROW(ensemble_scan(terrain, {}, ScanParams{}), Error);
  const std::vector<NamedCascade> dets{{"x", testing::tiny_model()}, {"y", testing::tiny_model()}};
  const auto r = ensemble_scan_integral(IntegralImage(terrain), dets, ScanParams{}, GroupParams{0.3, 1});
  EXPECT_EQ(r.stats.size(), 2u);
  EXPECT_EQ(r.stats.at("x").windows_evaluated, r.stats.at("y").windows_evaluated);
  // Identical cascades agree everywhere, so every group has both votes.
  for (const auto& g : r.groups) EXPECT_EQ(g.consensus(), 2);
}

}  // namespace
}  // namespace facescan::detector
