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

#include "facescan/pipeline/execute.hpp"
#include "support.hpp"

namespace facescan::pipeline {
namespace {

ErrorCode parse_error_code(const std::string& text) {
  try {
    parse_job(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "job parsed:\n" << text;
  return ErrorCode::kConflict;
}

TEST(Job, ParsesFixtureJob) {
  const auto job = parse_job(testing::fixture_job_toml("j", 4, 2, "[0, 0, 1024, 768]", 5, "[scan]\nstep_base = 1\n"));
  EXPECT_EQ(job.job_id, "j");
  EXPECT_EQ(job.zoom, 4);
  ASSERT_EQ(job.sources.size(), 1u);
  EXPECT_EQ(job.sources[0].spec.layer, "wac");
  ASSERT_TRUE(job.sources[0].fixture.has_value());
  EXPECT_EQ(job.sources[0].fixture->faces, 5);
  EXPECT_EQ(job.regions[0].rect, (geo::PixelRect{0, 0, 1024, 768}));
  EXPECT_EQ(job.scan.step_base, 1.0);
  EXPECT_EQ(job.halo(), 96);
  EXPECT_EQ(job.total_pixels(), 1024 * 768);
}

TEST(Job, RejectsMalformedJobs) {
  const std::string base = testing::fixture_job_toml("j", 4, 2, "[0, 0, 512, 512]", 0);
  EXPECT_EQ(parse_error_code("job_id = \n"), ErrorCode::kParse);
  EXPECT_EQ(parse_error_code(base + "dedup_iou_extra = 1\n[scan]\nstep_base = \"one\"\n"), ErrorCode::kParse);
  EXPECT_EQ(parse_error_code(testing::fixture_job_toml("bad id", 4, 2, "[0, 0, 512, 512]", 0)),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(parse_error_code(testing::fixture_job_toml("j", 1, 2, "[0, 0, 1024, 1024]", 0)), ErrorCode::kOutOfRange);
  EXPECT_EQ(parse_error_code(testing::fixture_job_toml("j", 4, 0, "[0, 0, 512, 512]", 0)),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(parse_error_code(base + "[[regions]]\nsource = \"moon\"\npixels = [100, 100, 10, 10]\n"),
            ErrorCode::kInvalidArgument);  // overlaps the first region
  EXPECT_EQ(parse_error_code(base + "[[regions]]\nsource = \"moon\"\npixels = [600, 0, 1, 1]\ntiles = [0, 0, 0, 0]\n"),
            ErrorCode::kParse);
  EXPECT_EQ(parse_error_code(base + "[[regions]]\nsource = \"mars\"\npixels = [600, 0, 1, 1]\n"),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(parse_error_code(base + "[[detectors]]\nid = \"tiny\"\nmodel = \"x\"\n"), ErrorCode::kInvalidArgument);
}

TEST(Job, TileRegionsUseTileSize) {
  auto text = testing::fixture_job_toml("j", 5, 2, "[0, 0, 1, 1]", 0);
  text += "[[regions]]\nsource = \"moon\"\ntiles = [2, 1, 3, 1]\n";
  const auto job = parse_job(text);
  EXPECT_EQ(job.regions[1].rect, (geo::PixelRect{512, 256, 512, 256}));
}

TEST(Partition, CoversEveryPixelExactlyOnce) {
  auto text = testing::fixture_job_toml("j", 5, 2, "[100, 37, 1500, 999]", 0);
  text += "[[regions]]\nsource = \"moon\"\npixels = [2000, 2000, 300, 1100]\n";
  const auto job = parse_job(text);
  const auto units = partition(job);
  std::int64_t area = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    EXPECT_EQ(units[i].unit_id, static_cast<std::int64_t>(i));
    EXPECT_FALSE(units[i].rect.empty());
    EXPECT_LE(units[i].rect.w, 512);
    EXPECT_LE(units[i].rect.h, 512);
    area += units[i].rect.area();
    for (std::size_t j = 0; j < i; ++j) EXPECT_TRUE(geo::intersect(units[i].rect, units[j].rect).empty());
    bool inside = false;
    for (const auto& r : job.regions) inside |= geo::intersect(units[i].rect, r.rect) == units[i].rect;
    EXPECT_TRUE(inside);
  }
  EXPECT_EQ(area, job.total_pixels());
}

TEST(Candidates, IdDependsOnLocationOnly) {
  const detector::BBox b{10.5, 20, 30, 30};
  const auto id = candidate_id(geo::BodyName::kMoon, "wac", 9, b);
  EXPECT_EQ(id.size(), 24u);
  EXPECT_EQ(id, candidate_id(geo::BodyName::kMoon, "wac", 9, b));
  EXPECT_NE(id, candidate_id(geo::BodyName::kMars, "wac", 9, b));
  EXPECT_NE(id, candidate_id(geo::BodyName::kMoon, "wac", 9, {10.5, 20, 30, 31}));
  // Oracle: SHA-256 of "abc" (FIPS 180-2 test vector).
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Candidates, JsonlRoundTrip) {
  CandidateRecord c;
  c.job_id = "j";
  c.layer = "wac";
  c.zoom = 9;
  c.bbox = {1.0 / 3.0, 2.5, 30, 30};
  c.candidate_id = candidate_id(c.body, c.layer, c.zoom, c.bbox);
  c.lonlat = {-12.345678901234, 45.0};
  c.consensus = 2;
  c.detector_ids = {"a", "b"};
  c.neighbor_count = 7;
  c.scores = {{"a", 0.1}, {"b", 2.0 / 7.0}};
  auto d = c;
  d.bbox.x = 99;
  const auto text = to_jsonl({c, d});
  const auto back = parse_jsonl(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], c);
  EXPECT_EQ(back[1], d);
  EXPECT_EQ(to_jsonl(back), text);
  EXPECT_TRUE(parse_jsonl("").empty());
  EXPECT_THROW(parse_jsonl(text + "{not json\n"), Error);
  EXPECT_THROW(parse_jsonl("{\"candidate_id\": 1}\n"), Error);
}

TEST(Aggregate, HaloDuplicatesCollapseToOne) {
  const auto job = parse_job(testing::fixture_job_toml("j", 4, 2, "[0, 0, 1024, 1024]", 0));
  const auto rec = [](double x, double score, int consensus) {
    CandidateRecord c;
    c.layer = "wac";
    c.bbox = {x, 100, 40, 40};
    c.candidate_id = candidate_id(c.body, c.layer, 4, c.bbox);
    c.consensus = consensus;
    c.scores = {{"tiny", score}};
    return c;
  };
  UnitResult a, b;
  a.candidates = {rec(490, 1.0, 1), rec(100, 0.5, 1)};
  b.candidates = {rec(492, 2.0, 1), rec(700, 0.1, 1)};  // 492 overlaps 490 at IoU 0.905
  const auto kept = aggregate(job, {&a, &b});
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].bbox.x, 492);  // higher score wins the canonical order
  EXPECT_EQ(kept[1].bbox.x, 100);
  EXPECT_EQ(kept[2].bbox.x, 700);
  auto other_layer = rec(490, 1.0, 1);
  other_layer.layer = "other";
  b.candidates.push_back(other_layer);
  EXPECT_EQ(aggregate(job, {&a, &b}).size(), 4u);  // dedup never crosses layers
}

TEST(Report, PixelAccountingWithMissingTilesAndFailedUnits) {
  auto text = testing::fixture_job_toml("j", 4, 1, "[0, 0, 768, 512]", 0);
  text.replace(text.find("[[regions]]"), 0, "missing = [[4, 1, 0], [4, 2, 1]]\n");
  const auto job = parse_job(text);
  const auto rep = run_local(job, 1);
  EXPECT_TRUE(rep.complete());
  EXPECT_EQ(rep.units_total, 6);
  EXPECT_EQ(rep.pixels_total, 768 * 512);
  EXPECT_EQ(rep.pixels_missing, 2 * 256 * 256);
  EXPECT_EQ(rep.pixels_scanned + rep.pixels_missing, rep.pixels_total);
  ASSERT_EQ(rep.layers.size(), 1u);
  EXPECT_EQ(rep.layers[0].pixels_missing, rep.pixels_missing);

  // A failed unit's whole core counts as missing.
  auto units = partition(job);
  units[3].status = UnitStatus::kFailed;
  UnitResult ok;
  ok.pixels_scanned = units[0].rect.area();
  const auto partial = make_report(job, units, {&ok, nullptr, nullptr, nullptr});
  EXPECT_FALSE(partial.complete());
  EXPECT_EQ(partial.failed_units, std::vector<std::int64_t>{3});
  EXPECT_EQ(partial.pixels_failed, units[3].rect.area());
  EXPECT_EQ(partial.pixels_missing, units[3].rect.area());
  EXPECT_EQ(partial.pixels_scanned, units[0].rect.area());
}

TEST(RunLocal, WorkerCountDoesNotChangeOutput) {
  const auto job = parse_job(testing::fixture_job_toml("j", 4, 1, "[0, 0, 1024, 768]", 8, "[scan]\nmin_neighbors = 1\n"));
  const auto dets = job.load_detectors();
  const auto one = run_local(job, dets, {1, {}});
  const auto four = run_local(job, dets, {4, {}});
  EXPECT_EQ(one.units_total, 12);
  EXPECT_FALSE(one.candidates.empty());
  EXPECT_EQ(to_jsonl(one.candidates), to_jsonl(four.candidates));
  auto a = to_json(one), b = to_json(four);
  a.erase("unit_seconds");
  b.erase("unit_seconds");
  EXPECT_EQ(a.dump(), b.dump());
  for (std::size_t i = 1; i < one.candidates.size(); ++i)
    EXPECT_FALSE(canonical_order(one.candidates[i], one.candidates[i - 1]));
}

TEST(RunLocal, UnitsAgreeWithSingleUnitScan) {
  // Small units see the same windows as one big unit thanks to the halo,
  // so every big-unit candidate must also come out of the tiled run.
  const std::string extra = "[scan]\nmin_neighbors = 2\n";
  const auto tiled = parse_job(testing::fixture_job_toml("j", 4, 1, "[0, 0, 768, 768]", 10, extra));
  const auto whole = parse_job(testing::fixture_job_toml("j", 4, 3, "[0, 0, 768, 768]", 10, extra));
  const auto dets = tiled.load_detectors();
  const auto a = run_local(tiled, dets, {1, {}});
  const auto b = run_local(whole, dets, {1, {}});
  EXPECT_EQ(a.units_total, 9);
  EXPECT_EQ(b.units_total, 1);
  ASSERT_FALSE(b.candidates.empty());
  int matched = 0;
  for (const auto& c : b.candidates) {
    for (const auto& d : a.candidates)
      if (detector::iou(c.bbox, d.bbox) >= 0.5) {
        ++matched;
        break;
      }
  }
  EXPECT_GE(matched, static_cast<int>(b.candidates.size()) * 9 / 10);
  // No two tiled candidates are halo duplicates of each other.
  for (std::size_t i = 0; i < a.candidates.size(); ++i)
    for (std::size_t j = i + 1; j < a.candidates.size(); ++j)
      EXPECT_LT(detector::iou(a.candidates[i].bbox, a.candidates[j].bbox), tiled.dedup_iou);
}

}  // namespace
}  // namespace facescan::pipeline
