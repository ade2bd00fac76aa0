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

// Scan jobs: sources, regions, detectors and scan settings, loaded from TOML,
// and their partition into disjoint work units.

#pragma once

#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "facescan/classifier/model_io.hpp"
#include "facescan/common.hpp"
#include "facescan/detector/ensemble.hpp"
#include "facescan/geo.hpp"
#include "facescan/tiles/fetcher.hpp"
#include "facescan/tiles/source.hpp"

namespace facescan::pipeline {

/// Procedural imagery for fixture sources: terrain plus planted objects.
struct FixtureConfig {
  tiles::FixturePattern pattern = tiles::FixturePattern::kTerrain;
  tiles::TerrainParams terrain;
  int faces = 0;
  std::uint64_t face_seed = 1;
  int decoys = 0;
  std::uint64_t decoy_seed = 2;
  int min_size = 24;
  int max_size = 72;
  int gap = 16;
  std::optional<geo::PixelRect> area;  // where plants go; default: bbox of the source's regions
  std::set<tiles::FixtureWorld::Key> missing;

  /// Faces first, then decoys placed clear of them.
  std::vector<tiles::Plant> plants(const geo::PixelRect& default_area) const {
    const geo::PixelRect a = area.value_or(default_area);
    auto out = tiles::scatter_plants(face_seed, tiles::PlantKind::kFace, faces, a, min_size, max_size, gap);
    const auto d = tiles::scatter_plants(decoy_seed, tiles::PlantKind::kDecoy, decoys, a, min_size, max_size, gap, out);
    out.insert(out.end(), d.begin(), d.end());
    return out;
  }
};

struct SourceConfig {
  std::string name;
  tiles::TileSourceSpec spec;
  std::optional<FixtureConfig> fixture;
};

struct Region {
  std::size_t source = 0;  // index into ScanJob::sources
  geo::PixelRect rect;     // global mosaic pixels at the job zoom
};

struct DetectorRef {
  std::string id;
  std::string model_path;
};

struct ScanJob {
  std::string job_id;
  int zoom = 0;
  int unit_size = 8;  // tiles per unit side
  int halo_px = -1;   // < 0: the scan's max window
  std::vector<SourceConfig> sources;
  std::vector<Region> regions;
  std::vector<DetectorRef> detectors;
  detector::ScanParams scan;
  detector::GroupParams group;
  double dedup_iou = 0.6;
  double lease_seconds = 60.0;
  int max_attempts = 3;
  tiles::FetchOptions fetch;
  std::filesystem::path base_dir;  // resolves relative model paths

  ScanJob() { scan.max_window = 96; }

  int halo() const { return halo_px >= 0 ? halo_px : scan.max_window; }

  std::int64_t total_pixels() const {
    std::int64_t n = 0;
    for (const auto& r : regions) n += r.rect.area();
    return n;
  }

  geo::PixelRect source_bounds(std::size_t source) const {
    std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool first = true;
    for (const auto& r : regions) {
      if (r.source != source) continue;
      if (first) {
        x0 = r.rect.x, y0 = r.rect.y, x1 = r.rect.right(), y1 = r.rect.bottom();
        first = false;
      } else {
        x0 = std::min(x0, r.rect.x), y0 = std::min(y0, r.rect.y);
        x1 = std::max(x1, r.rect.right()), y1 = std::max(y1, r.rect.bottom());
      }
    }
    return {x0, y0, x1 - x0, y1 - y0};
  }

  void validate() const {
    if (job_id.empty() || job_id.find_first_of("/\\ ") != std::string::npos)
      fail(ErrorCode::kInvalidArgument, "job_id must be a non-empty plain name");
    if (sources.empty()) fail(ErrorCode::kInvalidArgument, "job needs at least one source");
    if (detectors.empty() || detectors.size() > 3) fail(ErrorCode::kInvalidArgument, "job needs 1-3 detectors");
    if (regions.empty()) fail(ErrorCode::kInvalidArgument, "job needs at least one region");
    if (unit_size < 1) fail(ErrorCode::kInvalidArgument, "unit_size must be >= 1");
    if (!(dedup_iou > 0.0 && dedup_iou <= 1.0)) fail(ErrorCode::kInvalidArgument, "dedup_iou outside (0, 1]");
    if (!(lease_seconds > 0.0) || max_attempts < 1) fail(ErrorCode::kInvalidArgument, "bad lease settings");
    scan.validate();
    std::set<std::string> ids;
    for (const auto& d : detectors)
      if (d.id.empty() || !ids.insert(d.id).second) fail(ErrorCode::kInvalidArgument, "detector ids must be unique");
    for (const auto& s : sources) {
      s.spec.validate();
      if (zoom < 0 || zoom > s.spec.max_zoom) fail(ErrorCode::kInvalidArgument, "zoom exceeds source max_zoom");
      if ((s.spec.kind == tiles::SourceKind::kFixture) != s.fixture.has_value())
        fail(ErrorCode::kInvalidArgument, "fixture settings belong to fixture sources only");
    }
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto& r = regions[i];
      if (r.source >= sources.size()) fail(ErrorCode::kInvalidArgument, "region references unknown source");
      if (r.rect.empty()) fail(ErrorCode::kInvalidArgument, "empty region");
      const std::int64_t size = tiles::mosaic_pixels(zoom, sources[r.source].spec.tile_size);
      if (r.rect.x < 0 || r.rect.y < 0 || r.rect.right() > size || r.rect.bottom() > size)
        fail(ErrorCode::kOutOfRange, "region outside the mosaic");
      for (std::size_t j = 0; j < i; ++j)
        if (regions[j].source == r.source && !geo::intersect(regions[j].rect, r.rect).empty())
          fail(ErrorCode::kInvalidArgument, "regions of one source overlap");
    }
  }

  std::filesystem::path model_path(const DetectorRef& d) const {
    const std::filesystem::path p(d.model_path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }

  std::vector<detector::NamedCascade> load_detectors() const {
    std::vector<detector::NamedCascade> out;
    for (const auto& d : detectors) out.push_back({d.id, classifier::load_model_file(model_path(d).string())});
    return out;
  }
};

namespace detail {

template <typename T>
T get_or(const toml::table& t, std::string_view key, T fallback) {
  if (const auto* node = t.get(key)) {
    if constexpr (std::is_same_v<T, double>) {
      if (auto v = node->value<double>()) return *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value<bool>()) return *v;
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = node->value<std::int64_t>()) return static_cast<T>(*v);
    } else {
      if (auto v = node->value<std::string>()) return *v;
    }
    fail(ErrorCode::kParse, "job key '" + std::string(key) + "' has the wrong type");
  }
  return fallback;
}

inline std::vector<std::int64_t> int_array(const toml::table& t, std::string_view key, std::size_t n) {
  const auto* arr = t.get_as<toml::array>(key);
  if (!arr || arr->size() != n) fail(ErrorCode::kParse, "'" + std::string(key) + "' needs " + std::to_string(n) + " integers");
  std::vector<std::int64_t> out;
  for (const auto& v : *arr) {
    const auto i = v.value<std::int64_t>();
    if (!i) fail(ErrorCode::kParse, "'" + std::string(key) + "' needs integers");
    out.push_back(*i);
  }
  return out;
}

inline FixtureConfig parse_fixture(const toml::table& t) {
  FixtureConfig f;
  f.pattern = tiles::fixture_pattern_from_string(get_or<std::string>(t, "pattern", "terrain"));
  f.terrain.seed = get_or<std::uint64_t>(t, "seed", f.terrain.seed);
  f.faces = get_or<int>(t, "faces", 0);
  f.face_seed = get_or<std::uint64_t>(t, "face_seed", f.face_seed);
  f.decoys = get_or<int>(t, "decoys", 0);
  f.decoy_seed = get_or<std::uint64_t>(t, "decoy_seed", f.decoy_seed);
  f.min_size = get_or<int>(t, "min_size", f.min_size);
  f.max_size = get_or<int>(t, "max_size", f.max_size);
  f.gap = get_or<int>(t, "gap", f.gap);
  if (t.contains("area")) {
    const auto a = int_array(t, "area", 4);
    f.area = geo::PixelRect{a[0], a[1], a[2], a[3]};
  }
  if (const auto* missing = t.get_as<toml::array>("missing")) {
    for (const auto& m : *missing) {
      const auto* triple = m.as_array();
      if (!triple || triple->size() != 3) fail(ErrorCode::kParse, "missing tiles are [z, x, y] triples");
      f.missing.insert({static_cast<int>(triple->get(0)->value_or<std::int64_t>(0)),
                        triple->get(1)->value_or<std::int64_t>(0), triple->get(2)->value_or<std::int64_t>(0)});
    }
  }
  if (f.min_size < 1 || f.max_size < f.min_size) fail(ErrorCode::kInvalidArgument, "bad fixture plant sizes");
  return f;
}

}  // namespace detail

/// Parses a job document. Relative model paths resolve against `base_dir`.
inline ScanJob parse_job(std::string_view text, const std::filesystem::path& base_dir = {}) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "job file: " << e.description() << " at line " << e.source().begin.line;
    fail(ErrorCode::kParse, msg.str());
  }
  using detail::get_or;
  ScanJob job;
  job.base_dir = base_dir;
  job.job_id = get_or<std::string>(doc, "job_id", "");
  job.zoom = get_or<int>(doc, "zoom", 0);
  job.unit_size = get_or<int>(doc, "unit_size", job.unit_size);
  job.halo_px = get_or<int>(doc, "halo_px", job.halo_px);
  job.dedup_iou = get_or<double>(doc, "dedup_iou", job.dedup_iou);
  job.lease_seconds = get_or<double>(doc, "lease_seconds", job.lease_seconds);
  job.max_attempts = get_or<int>(doc, "max_attempts", job.max_attempts);

  if (const auto* srcs = doc.get_as<toml::array>("sources")) {
    for (const auto& node : *srcs) {
      const auto* t = node.as_table();
      if (!t) fail(ErrorCode::kParse, "[[sources]] entries must be tables");
      SourceConfig s;
      s.name = get_or<std::string>(*t, "name", "source" + std::to_string(job.sources.size()));
      s.spec.kind = tiles::source_kind_from_string(get_or<std::string>(*t, "kind", "fixture"));
      s.spec.uri = get_or<std::string>(*t, "uri", "");
      s.spec.layer = get_or<std::string>(*t, "layer", s.name);
      s.spec.body = geo::body_from_string(get_or<std::string>(*t, "body", "moon")).name;
      s.spec.projection = geo::projection_kind_from_string(get_or<std::string>(*t, "projection", "equirectangular"));
      s.spec.tile_size = get_or<int>(*t, "tile_size", s.spec.tile_size);
      s.spec.max_zoom = get_or<int>(*t, "max_zoom", s.spec.max_zoom);
      if (const auto* f = t->get_as<toml::table>("fixture")) s.fixture = detail::parse_fixture(*f);
      else if (s.spec.kind == tiles::SourceKind::kFixture) s.fixture = FixtureConfig{};
      job.sources.push_back(std::move(s));
    }
  }

  const auto source_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < job.sources.size(); ++i)
      if (job.sources[i].name == name) return i;
    fail(ErrorCode::kInvalidArgument, "region references unknown source '" + name + "'");
  };
  if (const auto* regs = doc.get_as<toml::array>("regions")) {
    for (const auto& node : *regs) {
      const auto* t = node.as_table();
      if (!t) fail(ErrorCode::kParse, "[[regions]] entries must be tables");
      Region r;
      r.source = t->contains("source") ? source_index(get_or<std::string>(*t, "source", "")) : 0;
      const bool has_tiles = t->contains("tiles"), has_pixels = t->contains("pixels");
      if (has_tiles == has_pixels) fail(ErrorCode::kParse, "a region needs exactly one of 'tiles' or 'pixels'");
      if (has_tiles) {
        if (r.source >= job.sources.size()) fail(ErrorCode::kInvalidArgument, "region without a source");
        const auto v = detail::int_array(*t, "tiles", 4);  // x0, y0, x1, y1 inclusive
        if (v[2] < v[0] || v[3] < v[1]) fail(ErrorCode::kInvalidArgument, "empty tile rectangle");
        const std::int64_t ts = job.sources[r.source].spec.tile_size;
        r.rect = {v[0] * ts, v[1] * ts, (v[2] - v[0] + 1) * ts, (v[3] - v[1] + 1) * ts};
      } else {
        const auto v = detail::int_array(*t, "pixels", 4);  // x, y, w, h
        r.rect = {v[0], v[1], v[2], v[3]};
      }
      job.regions.push_back(r);
    }
  }

  if (const auto* dets = doc.get_as<toml::array>("detectors")) {
    for (const auto& node : *dets) {
      const auto* t = node.as_table();
      if (!t) fail(ErrorCode::kParse, "[[detectors]] entries must be tables");
      job.detectors.push_back({get_or<std::string>(*t, "id", ""), get_or<std::string>(*t, "model", "")});
    }
  }

  if (const auto* s = doc.get_as<toml::table>("scan")) {
    auto& p = job.scan;
    p.scale_start = get_or<double>(*s, "scale_start", p.scale_start);
    p.scale_factor = get_or<double>(*s, "scale_factor", p.scale_factor);
    p.step_base = get_or<double>(*s, "step_base", p.step_base);
    p.step_multiplier = get_or<int>(*s, "step_multiplier", p.step_multiplier);
    p.min_window = get_or<int>(*s, "min_window", p.min_window);
    p.max_window = get_or<int>(*s, "max_window", p.max_window);
    p.skip_low_variance = get_or<bool>(*s, "skip_low_variance", p.skip_low_variance);
    p.variance_threshold = get_or<double>(*s, "variance_threshold", p.variance_threshold);
    job.group.iou_min = get_or<double>(*s, "group_iou", job.group.iou_min);
    job.group.min_neighbors = get_or<int>(*s, "min_neighbors", job.group.min_neighbors);
  }

  if (const auto* f = doc.get_as<toml::table>("fetch")) {
    auto& o = job.fetch;
    o.cache_root = get_or<std::string>(*f, "cache_dir", o.cache_root);
    o.use_cache = get_or<bool>(*f, "use_cache", o.use_cache);
    o.max_retries = get_or<int>(*f, "max_retries", o.max_retries);
    o.backoff_base_s = get_or<double>(*f, "backoff_base_s", o.backoff_base_s);
    o.rate_limit_per_s = get_or<double>(*f, "rate_limit_per_s", o.rate_limit_per_s);
  }
  job.fetch = tiles::with_env_overrides(job.fetch);

  job.validate();
  return job;
}

inline ScanJob load_job_file(const std::string& path) {
  const auto bytes = tiles::read_file_bytes(path);
  return parse_job(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                   std::filesystem::path(path).parent_path());
}

/// Builds the fixture world of a fixture source (nullptr otherwise).
inline std::shared_ptr<tiles::FixtureWorld> make_fixture_world(const ScanJob& job, std::size_t source) {
  const auto& s = job.sources.at(source);
  if (!s.fixture) return nullptr;
  const auto& f = *s.fixture;
  auto world = std::make_shared<tiles::FixtureWorld>(f.terrain, f.plants(job.source_bounds(source)), f.pattern);
  world->set_missing(f.missing);
  return world;
}

/// One fetcher per source, sharing nothing.
inline std::vector<std::shared_ptr<tiles::TileFetcher>> make_fetchers(const ScanJob& job) {
  std::vector<std::shared_ptr<tiles::TileFetcher>> out;
  for (std::size_t i = 0; i < job.sources.size(); ++i)
    out.push_back(std::make_shared<tiles::TileFetcher>(job.sources[i].spec, job.fetch, make_fixture_world(job, i)));
  return out;
}

enum class UnitStatus { kPending, kLeased, kDone, kFailed };

inline std::string_view to_string(UnitStatus s) {
  switch (s) {
    case UnitStatus::kPending: return "pending";
    case UnitStatus::kLeased: return "leased";
    case UnitStatus::kDone: return "done";
    case UnitStatus::kFailed: return "failed";
  }
  return "?";
}

struct WorkUnit {
  std::int64_t unit_id = 0;
  std::string job_id;
  std::size_t source = 0;
  geo::PixelRect rect;  // core pixels owned by this unit
  UnitStatus status = UnitStatus::kPending;
  double lease_expiry = 0.0;  // coordinator clock, seconds
  int attempt = 0;
};

/// Splits every region along a global grid of unit_size x unit_size tiles.
/// Units are pairwise disjoint, cover the regions exactly, and come out in
/// region order, then row-major block order.
inline std::vector<WorkUnit> partition(const ScanJob& job) {
  job.validate();
  std::vector<WorkUnit> units;
  for (const auto& region : job.regions) {
    const std::int64_t block = std::int64_t{job.unit_size} * job.sources[region.source].spec.tile_size;
    const geo::PixelRect& r = region.rect;
    for (std::int64_t by = r.y / block; by <= (r.bottom() - 1) / block; ++by) {
      for (std::int64_t bx = r.x / block; bx <= (r.right() - 1) / block; ++bx) {
        WorkUnit u;
        u.unit_id = static_cast<std::int64_t>(units.size());
        u.job_id = job.job_id;
        u.source = region.source;
        u.rect = geo::intersect({bx * block, by * block, block, block}, r);
        units.push_back(std::move(u));
      }
    }
  }
  return units;
}

}  // namespace facescan::pipeline
