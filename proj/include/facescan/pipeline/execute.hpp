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

// Unit execution, cross-unit aggregation and job reports. A unit's result is
// a pure function of (job, unit, tiles, models), which is what lets local
// and distributed runs agree byte for byte.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "facescan/detector/ensemble.hpp"
#include "facescan/pipeline/candidates.hpp"
#include "facescan/pipeline/job.hpp"
#include "facescan/tiles/fetcher.hpp"

namespace facescan::pipeline {

struct UnitResult {
  std::int64_t unit_id = 0;
  std::vector<CandidateRecord> candidates;  // groups whose center lies in the unit core
  std::int64_t pixels_scanned = 0;
  std::int64_t pixels_missing = 0;
  std::map<std::string, detector::ScanStats> stats;  // per detector id
  double seconds = 0.0;
};

inline ordered_json to_json(const detector::ScanStats& s) {
  return ordered_json{{"windows_evaluated", s.windows_evaluated},
                      {"windows_skipped", s.windows_skipped},
                      {"accepted", s.accepted},
                      {"rejections", s.rejections}};
}

inline detector::ScanStats scan_stats_from_json(const nlohmann::json& j) {
  detector::ScanStats s;
  s.windows_evaluated = j.at("windows_evaluated").get<std::uint64_t>();
  s.windows_skipped = j.at("windows_skipped").get<std::uint64_t>();
  s.accepted = j.at("accepted").get<std::uint64_t>();
  s.rejections = j.at("rejections").get<std::vector<std::uint64_t>>();
  return s;
}

inline ordered_json to_json(const UnitResult& r) {
  ordered_json stats = ordered_json::object();
  for (const auto& [id, s] : r.stats) stats[id] = to_json(s);
  ordered_json cands = ordered_json::array();
  for (const auto& c : r.candidates) cands.push_back(to_json(c));
  return ordered_json{{"unit_id", r.unit_id},         {"pixels_scanned", r.pixels_scanned},
                      {"pixels_missing", r.pixels_missing}, {"stats", stats},
                      {"candidates", cands},          {"seconds", r.seconds}};
}

inline UnitResult unit_result_from_json(const nlohmann::json& j) {
  try {
    UnitResult r;
    r.unit_id = j.at("unit_id").get<std::int64_t>();
    r.pixels_scanned = j.at("pixels_scanned").get<std::int64_t>();
    r.pixels_missing = j.at("pixels_missing").get<std::int64_t>();
    for (const auto& [id, s] : j.at("stats").items()) r.stats[id] = scan_stats_from_json(s);
    for (const auto& c : j.at("candidates")) r.candidates.push_back(candidate_from_json(c));
    r.seconds = j.value("seconds", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("unit result: ") + e.what());
  }
}

/// Scan region of a unit: its core plus the halo, clamped to the mosaic.
inline geo::PixelRect unit_scan_rect(const ScanJob& job, const WorkUnit& u) {
  const std::int64_t h = job.halo();
  const std::int64_t size = tiles::mosaic_pixels(job.zoom, job.sources[u.source].spec.tile_size);
  return geo::intersect({u.rect.x - h, u.rect.y - h, u.rect.w + 2 * h, u.rect.h + 2 * h}, {0, 0, size, size});
}

inline CandidateRecord make_candidate(const ScanJob& job, const SourceConfig& src,
                                      const detector::CandidateGroup& g) {
  CandidateRecord c;
  c.job_id = job.job_id;
  c.body = src.spec.body;
  c.layer = src.spec.layer;
  c.zoom = job.zoom;
  c.bbox = g.bbox;
  c.candidate_id = candidate_id(c.body, c.layer, c.zoom, c.bbox);
  const geo::PixelPoint center{g.bbox.cx(), g.bbox.cy(), job.zoom, src.spec.tile_size};
  c.lonlat = geo::pixel_to_lonlat(center, src.spec.make_projection());
  c.consensus = g.consensus();
  c.detector_ids = g.detector_ids();
  c.neighbor_count = g.neighbor_count;
  c.scores = g.best_score;
  return c;
}

/// Assembles the unit (core + halo), scans it with every detector and keeps
/// the groups whose box center falls inside the core.
inline UnitResult run_unit(const ScanJob& job, const WorkUnit& unit, tiles::TileFetcher& fetcher,
                           const std::vector<detector::NamedCascade>& detectors) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& src = job.sources.at(unit.source);
  UnitResult out;
  out.unit_id = unit.unit_id;
  for (const auto& d : detectors) out.stats[d.id].rejections.assign(d.cascade.stages.size(), 0);

  const auto region = tiles::assemble_pixels(fetcher, job.zoom, unit_scan_rect(job, unit));
  const std::int64_t ts = src.spec.tile_size;
  for (const auto& t : region.missing_tiles)
    out.pixels_missing += geo::intersect({t.x * ts, t.y * ts, ts, ts}, unit.rect).area();
  out.pixels_scanned = unit.rect.area() - out.pixels_missing;

  if (!tiles::low_information(region.image, job.scan.skip_low_variance ? job.scan.variance_threshold : 0.0)) {
    const IntegralImage ii(region.image);
    const auto ens = detector::ensemble_scan_integral(ii, detectors, job.scan, job.group, region.rect.x, region.rect.y);
    for (const auto& [id, s] : ens.stats) out.stats[id].merge(s);
    for (const auto& g : ens.groups) {
      const double cx = g.bbox.cx(), cy = g.bbox.cy();
      if (cx < static_cast<double>(unit.rect.x) || cx >= static_cast<double>(unit.rect.right()) ||
          cy < static_cast<double>(unit.rect.y) || cy >= static_cast<double>(unit.rect.bottom()))
        continue;
      out.candidates.push_back(make_candidate(job, src, g));
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Merges unit outputs into the canonical candidate list. Groups seen by two
/// units through the halo are deduplicated (IoU >= dedup_iou within one
/// body/layer), keeping the first in canonical order.
inline std::vector<CandidateRecord> aggregate(const ScanJob& job, const std::vector<const UnitResult*>& results) {
  std::vector<CandidateRecord> all;
  for (const auto* r : results) all.insert(all.end(), r->candidates.begin(), r->candidates.end());
  std::sort(all.begin(), all.end(), canonical_order);
  std::vector<CandidateRecord> kept;
  std::map<std::pair<geo::BodyName, std::string>, std::vector<std::size_t>> by_layer;
  for (auto& c : all) {
    auto& bucket = by_layer[{c.body, c.layer}];
    bool dup = false;
    for (std::size_t k : bucket) {
      if (detector::iou(kept[k].bbox, c.bbox) >= job.dedup_iou) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    bucket.push_back(kept.size());
    kept.push_back(std::move(c));
  }
  return kept;
}

struct LayerTotals {
  geo::BodyName body = geo::BodyName::kMoon;
  std::string layer;
  std::int64_t pixels_total = 0;
  std::int64_t pixels_scanned = 0;
  std::int64_t pixels_missing = 0;  // absent tiles plus failed units
  std::uint64_t windows_evaluated = 0;
  std::uint64_t windows_skipped = 0;
  std::int64_t units = 0;
  std::int64_t units_failed = 0;
};

struct JobReport {
  std::string job_id;
  std::int64_t units_total = 0;
  std::int64_t units_done = 0;
  std::vector<std::int64_t> failed_units;
  std::int64_t pixels_total = 0;
  std::int64_t pixels_scanned = 0;
  std::int64_t pixels_missing = 0;
  std::int64_t pixels_failed = 0;  // part of pixels_missing
  std::vector<LayerTotals> layers;
  std::map<std::string, detector::ScanStats> stats;  // per detector; rejections = stage histogram
  std::map<int, std::int64_t> candidates_by_consensus;
  std::vector<CandidateRecord> candidates;  // canonical order
  double unit_seconds = 0.0;

  bool complete() const { return units_done + static_cast<std::int64_t>(failed_units.size()) == units_total; }

  detector::ScanStats combined_stats() const {
    detector::ScanStats s;
    for (const auto& [id, st] : stats) s.merge(st);
    return s;
  }
};

/// Builds the report from per-unit results (nullptr = failed or not done).
inline JobReport make_report(const ScanJob& job, const std::vector<WorkUnit>& units,
                             const std::vector<const UnitResult*>& results) {
  JobReport rep;
  rep.job_id = job.job_id;
  rep.units_total = static_cast<std::int64_t>(units.size());
  std::map<std::size_t, LayerTotals> layers;
  std::vector<const UnitResult*> done;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    const auto& src = job.sources[u.source].spec;
    auto& lt = layers[u.source];
    lt.body = src.body;
    lt.layer = src.layer;
    lt.pixels_total += u.rect.area();
    ++lt.units;
    rep.pixels_total += u.rect.area();
    const UnitResult* r = i < results.size() ? results[i] : nullptr;
    if (!r) {
      if (u.status == UnitStatus::kFailed) {
        rep.failed_units.push_back(u.unit_id);
        ++lt.units_failed;
        lt.pixels_missing += u.rect.area();
        rep.pixels_failed += u.rect.area();
        rep.pixels_missing += u.rect.area();
      }
      continue;
    }
    ++rep.units_done;
    done.push_back(r);
    lt.pixels_scanned += r->pixels_scanned;
    lt.pixels_missing += r->pixels_missing;
    rep.pixels_scanned += r->pixels_scanned;
    rep.pixels_missing += r->pixels_missing;
    rep.unit_seconds += r->seconds;
    for (const auto& [id, s] : r->stats) {
      rep.stats[id].merge(s);
      lt.windows_evaluated += s.windows_evaluated;
      lt.windows_skipped += s.windows_skipped;
    }
  }
  for (auto& [idx, lt] : layers) rep.layers.push_back(lt);
  rep.candidates = aggregate(job, done);
  for (const auto& c : rep.candidates) ++rep.candidates_by_consensus[c.consensus];
  return rep;
}

inline ordered_json to_json(const JobReport& r) {
  ordered_json layers = ordered_json::array();
  for (const auto& l : r.layers)
    layers.push_back({{"body", geo::to_string(l.body)},
                      {"layer", l.layer},
                      {"pixels_total", l.pixels_total},
                      {"pixels_scanned", l.pixels_scanned},
                      {"pixels_missing", l.pixels_missing},
                      {"windows_evaluated", l.windows_evaluated},
                      {"windows_skipped", l.windows_skipped},
                      {"units", l.units},
                      {"units_failed", l.units_failed}});
  ordered_json stats = ordered_json::object();
  for (const auto& [id, s] : r.stats) stats[id] = to_json(s);
  ordered_json by_consensus = ordered_json::object();
  for (const auto& [k, n] : r.candidates_by_consensus) by_consensus[std::to_string(k)] = n;
  return ordered_json{{"job_id", r.job_id},
                      {"complete", r.complete()},
                      {"units_total", r.units_total},
                      {"units_done", r.units_done},
                      {"failed_units", r.failed_units},
                      {"pixels_total", r.pixels_total},
                      {"pixels_scanned", r.pixels_scanned},
                      {"pixels_missing", r.pixels_missing},
                      {"pixels_failed", r.pixels_failed},
                      {"layers", layers},
                      {"detectors", stats},
                      {"candidates", r.candidates.size()},
                      {"candidates_by_consensus", by_consensus},
                      {"unit_seconds", r.unit_seconds}};
}

struct LocalRunOptions {
  unsigned workers = 1;
  std::function<void(const WorkUnit&, const UnitResult*, const std::string& error)> on_unit;
};

/// Runs every unit on `workers` threads. Failing units are retried up to
/// max_attempts times and then recorded as failed; the job still completes.
inline JobReport run_local(const ScanJob& job, const std::vector<detector::NamedCascade>& detectors,
                           const LocalRunOptions& opts = {}) {
  auto units = partition(job);
  const auto fetchers = make_fetchers(job);
  std::vector<std::optional<UnitResult>> results(units.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) {
      WorkUnit& u = units[i];
      std::string last_error;
      for (int attempt = 1; attempt <= job.max_attempts; ++attempt) {
        try {
          UnitResult r = run_unit(job, u, *fetchers[u.source], detectors);
          std::lock_guard lock(mu);
          u.attempt = attempt;
          u.status = UnitStatus::kDone;
          results[i] = std::move(r);
          break;
        } catch (const std::exception& e) {
          last_error = e.what();
          std::lock_guard lock(mu);
          u.attempt = attempt;
          u.status = UnitStatus::kFailed;
        }
      }
      if (opts.on_unit) {
        std::lock_guard lock(mu);
        opts.on_unit(u, results[i] ? &*results[i] : nullptr, last_error);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(units.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  std::vector<const UnitResult*> ptrs;
  for (const auto& r : results) ptrs.push_back(r ? &*r : nullptr);
  return make_report(job, units, ptrs);
}

inline JobReport run_local(const ScanJob& job, unsigned workers) {
  return run_local(job, job.load_detectors(), LocalRunOptions{workers, {}});
}

}  // namespace facescan::pipeline
