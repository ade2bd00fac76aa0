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

// Tile source descriptions and the procedural fixture world behind the
// in-process and HTTP fixture sources.

#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "facescan/common.hpp"
#include "facescan/geo.hpp"
#include "facescan/tiles/codec.hpp"
#include "facescan/tiles/terrain.hpp"

namespace facescan::tiles {

enum class SourceKind { kLocalDir, kHttpTemplate, kFixture };

inline std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::kLocalDir: return "local_dir";
    case SourceKind::kHttpTemplate: return "http_template";
    case SourceKind::kFixture: return "fixture";
  }
  return "?";
}

inline SourceKind source_kind_from_string(std::string_view s) {
  if (s == "local_dir") return SourceKind::kLocalDir;
  if (s == "http_template") return SourceKind::kHttpTemplate;
  if (s == "fixture") return SourceKind::kFixture;
  fail(ErrorCode::kInvalidArgument, "unknown tile source kind: " + std::string(s));
}

/// Expands {z}, {x}, {y} in a URL or path template.
inline std::string expand_template(std::string_view tmpl, int z, std::int64_t x, std::int64_t y) {
  std::string out;
  out.reserve(tmpl.size() + 16);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
      const char key = tmpl[i + 1];
      if (key == 'z' || key == 'x' || key == 'y') {
        out += std::to_string(key == 'z' ? std::int64_t{z} : key == 'x' ? x : y);
        i += 2;
        continue;
      }
    }
    out += tmpl[i];
  }
  return out;
}

struct TileSourceSpec {
  SourceKind kind = SourceKind::kFixture;
  std::string uri;  // template for local_dir / http_template; ignored for fixture
  std::string layer = "default";
  geo::BodyName body = geo::BodyName::kMoon;
  geo::ProjectionKind projection = geo::ProjectionKind::kEquirectangular;
  int tile_size = 256;
  int max_zoom = 18;

  void validate() const {
    if (tile_size != 256 && tile_size != 512) fail(ErrorCode::kInvalidArgument, "tile_size must be 256 or 512");
    if (max_zoom < 0 || max_zoom > 30) fail(ErrorCode::kInvalidArgument, "max_zoom outside [0, 30]");
    if (layer.empty() || layer.find_first_of("/\\") != std::string::npos || layer == "." || layer == "..")
      fail(ErrorCode::kInvalidArgument, "layer must be a plain name");
    if (kind != SourceKind::kFixture) {
      for (const char* p : {"{z}", "{x}", "{y}"})
        if (uri.find(p) == std::string::npos)
          fail(ErrorCode::kInvalidArgument, std::string("tile template lacks ") + p);
    }
    (void)geo::Projection::make(projection, geo::Body::from(body));
  }

  geo::Projection make_projection() const { return geo::Projection::make(projection, geo::Body::from(body)); }
};

enum class FixturePattern {
  kTerrain,      // cratered terrain with plants
  kCoordinates,  // pixel value encodes global coordinates (stitch tests)
  kGradient,     // smooth diagonal ramp (seam tests)
  kBlank,        // constant gray, e.g. featureless ocean
};

inline std::string_view to_string(FixturePattern p) {
  switch (p) {
    case FixturePattern::kTerrain: return "terrain";
    case FixturePattern::kCoordinates: return "coordinates";
    case FixturePattern::kGradient: return "gradient";
    case FixturePattern::kBlank: return "blank";
  }
  return "?";
}

inline FixturePattern fixture_pattern_from_string(std::string_view s) {
  for (auto p : {FixturePattern::kTerrain, FixturePattern::kCoordinates, FixturePattern::kGradient,
                 FixturePattern::kBlank})
    if (to_string(p) == s) return p;
  fail(ErrorCode::kInvalidArgument, "unknown fixture pattern: " + std::string(s));
}

/// Deterministic imagery for fixture sources, plus scripted faults.
/// Every zoom level shares the same global pixel grid, which is all a
/// fixture needs. Thread-safe.
class FixtureWorld {
 public:
  using Key = std::tuple<int, std::int64_t, std::int64_t>;

  FixtureWorld() = default;
  explicit FixtureWorld(TerrainParams terrain, std::vector<Plant> plants = {},
                        FixturePattern pattern = FixturePattern::kTerrain)
      : terrain_(terrain), plants_(std::move(plants)), pattern_(pattern) {}

  const TerrainParams& terrain() const { return terrain_; }
  const std::vector<Plant>& plants() const { return plants_; }
  FixturePattern pattern() const { return pattern_; }

  /// Tiles that answer "not found".
  void set_missing(std::set<Key> missing) {
    std::lock_guard lock(mu_);
    missing_ = std::move(missing);
  }

  /// The next `n` requests for this tile fail transiently.
  void fail_next(const Key& k, int n) {
    std::lock_guard lock(mu_);
    failures_[k] = n;
  }

  /// The tile decodes to garbage.
  void set_corrupt(std::set<Key> corrupt) {
    std::lock_guard lock(mu_);
    corrupt_ = std::move(corrupt);
  }

  std::uint64_t calls() const { return calls_.load(); }
  std::uint64_t calls_for(const Key& k) const {
    std::lock_guard lock(mu_);
    const auto it = per_tile_.find(k);
    return it == per_tile_.end() ? 0 : it->second;
  }

  GrayImage render(const geo::PixelRect& r) const {
    switch (pattern_) {
      case FixturePattern::kTerrain: return render_fixture(terrain_, plants_, r);
      case FixturePattern::kBlank:
      case FixturePattern::kCoordinates:
      case FixturePattern::kGradient: {
        GrayImage g(static_cast<int>(r.w), static_cast<int>(r.h));
        for (int y = 0; y < g.height(); ++y)
          for (int x = 0; x < g.width(); ++x) g.at(x, y) = pattern_value(r.x + x, r.y + y);
        return g;
      }
    }
    return {};
  }

  std::uint8_t pattern_value(std::int64_t gx, std::int64_t gy) const {
    if (pattern_ == FixturePattern::kBlank) return 128;
    if (pattern_ == FixturePattern::kCoordinates) return static_cast<std::uint8_t>((gx * 7 + gy * 13) % 251);
    const std::int64_t t = ((gx + gy) / 4) % 510;  // triangle wave, no jumps
    return static_cast<std::uint8_t>(t < 256 ? t : 510 - t);
  }

  enum class Outcome { kOk, kMissing, kTransient, kCorrupt };

  /// One simulated request: counts it, then applies the fault script.
  Outcome request(const Key& k) {
    ++calls_;
    std::lock_guard lock(mu_);
    ++per_tile_[k];
    if (missing_.contains(k)) return Outcome::kMissing;
    if (auto it = failures_.find(k); it != failures_.end() && it->second > 0) {
      --it->second;
      return Outcome::kTransient;
    }
    if (corrupt_.contains(k)) return Outcome::kCorrupt;
    return Outcome::kOk;
  }

  std::vector<std::uint8_t> tile_png(const Key& k, int tile_size) const {
    const auto& [z, x, y] = k;
    (void)z;
    return encode_png(render({x * tile_size, y * tile_size, tile_size, tile_size}));
  }

 private:
  TerrainParams terrain_;
  std::vector<Plant> plants_;
  FixturePattern pattern_ = FixturePattern::kTerrain;
  mutable std::mutex mu_;
  std::set<Key> missing_;
  std::set<Key> corrupt_;
  std::map<Key, int> failures_;
  std::map<Key, std::uint64_t> per_tile_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace facescan::tiles
