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

// Procedural cratered terrain used by fixture tile sources and as the
// face-free background pool for training. Every pixel is a pure function of
// (seed, global x, global y), so tiles rendered separately stitch seamlessly.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "facescan/classifier/icons.hpp"
#include "facescan/geo.hpp"
#include "facescan/imaging.hpp"
#include "facescan/rng.hpp"

namespace facescan::tiles {

struct TerrainParams {
  std::uint64_t seed = 7;
  double albedo = 118.0;
  double shade_gain = 95.0;
  double crater_density = 0.55;  // probability a crater cell holds a crater
  double sun_elevation_deg = 35.0;
};

enum class PlantKind { kFace, kDecoy };

/// An object stamped over the terrain at global pixel (x, y), size x size.
struct Plant {
  PlantKind kind = PlantKind::kFace;
  std::int64_t x = 0;
  std::int64_t y = 0;
  int size = 24;
  std::uint64_t seed = 0;

  geo::PixelRect rect() const { return {x, y, size, size}; }
};

/// The "crater pair on a plateau" look-alike: a ringed depression holding
/// two dark pits but no mouth.
inline classifier::IconInstance decoy_instance(std::uint64_t seed) {
  Rng rng(seed);
  auto ic = classifier::draw_icon_instance(rng, classifier::IconParams::standard(seed));
  ic.draw_mouth = false;
  ic.eye_radius *= 1.25;
  return ic;
}

inline classifier::IconInstance face_instance(std::uint64_t seed) {
  Rng rng(seed);
  return classifier::draw_icon_instance(rng, classifier::IconParams::standard(seed));
}

inline GrayImage render_plant(const Plant& p) {
  return classifier::render_icon(p.kind == PlantKind::kFace ? face_instance(p.seed) : decoy_instance(p.seed),
                                 p.size);
}

namespace detail {

inline double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  return hash_unit(hash_combine(hash_combine(seed, static_cast<std::uint64_t>(ix)),
                                static_cast<std::uint64_t>(iy)));
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

inline double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double fx = x / cell, fy = y / cell;
  const double x0 = std::floor(fx), y0 = std::floor(fy);
  const double tx = fx - x0, ty = fy - y0;
  const double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
  const auto ix = static_cast<std::int64_t>(x0), iy = static_cast<std::int64_t>(y0);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * sx) + ((c + (d - c) * sx) - (a + (b - a) * sx)) * sy;
}

struct Crater {
  double cx, cy, r, depth, rim;
};

constexpr std::int64_t kCraterCells[] = {224, 112, 56, 28};

// Craters whose influence disk (2r) can touch `box`.
inline std::vector<Crater> craters_near(const TerrainParams& p, const geo::PixelRect& box) {
  std::vector<Crater> out;
  for (std::size_t layer = 0; layer < std::size(kCraterCells); ++layer) {
    const std::int64_t cell = kCraterCells[layer];
    const std::uint64_t lseed = hash_combine(p.seed, 1000 + layer);
    const std::int64_t cx0 = floor_div(box.x, cell) - 1, cx1 = floor_div(box.right(), cell) + 1;
    const std::int64_t cy0 = floor_div(box.y, cell) - 1, cy1 = floor_div(box.bottom(), cell) + 1;
    for (std::int64_t cy = cy0; cy <= cy1; ++cy) {
      for (std::int64_t cx = cx0; cx <= cx1; ++cx) {
        std::uint64_t h = hash_combine(hash_combine(lseed, static_cast<std::uint64_t>(cx)),
                                       static_cast<std::uint64_t>(cy));
        if (hash_unit(h) >= p.crater_density) continue;
        h = mix64(h);
        const double jx = hash_unit(h);
        h = mix64(h);
        const double jy = hash_unit(h);
        h = mix64(h);
        const double rr = hash_unit(h);
        h = mix64(h);
        const double dd = hash_unit(h);
        Crater c;
        c.cx = (static_cast<double>(cx) + jx) * cell;
        c.cy = (static_cast<double>(cy) + jy) * cell;
        c.r = (0.12 + 0.3 * rr) * cell;
        c.depth = (0.22 + 0.2 * dd) * c.r;
        c.rim = 0.12 * c.r;
        out.push_back(c);
      }
    }
  }
  return out;
}

inline double crater_height(const Crater& c, double x, double y) {
  const double dx = x - c.cx, dy = y - c.cy;
  const double d2 = (dx * dx + dy * dy) / (c.r * c.r);
  if (d2 >= 4.0) return 0.0;
  const double d = std::sqrt(d2);
  if (d < 1.0) return c.depth * (d2 - 1.0) + c.rim * std::pow(d, 8);
  const double t = (d - 1.0) / 0.35;
  return c.rim * std::exp(-t * t);
}

}  // namespace detail

/// Heightfield sample at global pixel (x, y); relief in pixel units.
inline double terrain_height(const TerrainParams& p, const std::vector<detail::Crater>& craters,
                             double x, double y) {
  double h = 0.0;
  double amp = 9.0;
  for (double cell = 256.0; cell >= 4.0; cell /= 2.0) {
    h += amp * detail::value_noise(hash_combine(p.seed, static_cast<std::uint64_t>(cell)), x, y, cell);
    amp *= 0.55;
  }
  for (const auto& c : craters) h += detail::crater_height(c, x, y);
  return h;
}

/// Renders the global pixel rectangle `region` (no plants).
inline GrayImage render_terrain(const TerrainParams& p, const geo::PixelRect& region) {
  if (region.empty()) fail(ErrorCode::kInvalidArgument, "empty terrain region");
  const geo::PixelRect padded{region.x - 1, region.y - 1, region.w + 2, region.h + 2};
  const auto craters = detail::craters_near(p, padded);
  const auto w = static_cast<int>(region.w), h = static_cast<int>(region.h);
  // Heights on the padded grid, craters filtered per row band for speed.
  std::vector<double> height(static_cast<std::size_t>(w + 2) * (h + 2));
  std::vector<detail::Crater> band;
  for (int y = 0; y < h + 2; ++y) {
    const double gy = static_cast<double>(padded.y + y);
    band.clear();
    for (const auto& c : craters)
      if (std::abs(gy - c.cy) < 2.0 * c.r) band.push_back(c);
    for (int x = 0; x < w + 2; ++x)
      height[static_cast<std::size_t>(y) * (w + 2) + x] =
          terrain_height(p, band, static_cast<double>(padded.x + x), gy);
  }
  const double elev = p.sun_elevation_deg * std::numbers::pi / 180.0;
  // Sun from the upper left.
  const double lx = -std::cos(elev) / std::sqrt(2.0), ly = lx, lz = std::sin(elev);
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto at = [&](int xx, int yy) {
        return height[static_cast<std::size_t>(yy) * (w + 2) + xx];
      };
      const double gx = 0.5 * (at(x + 2, y + 1) - at(x, y + 1));
      const double gy = 0.5 * (at(x + 1, y + 2) - at(x + 1, y));
      const double norm = std::sqrt(gx * gx + gy * gy + 1.0);
      const double lambert = std::max(0.0, (-gx * lx - gy * ly + lz) / norm);
      const double albedo_var =
          detail::value_noise(hash_combine(p.seed, 99), static_cast<double>(region.x + x),
                              static_cast<double>(region.y + y), 160.0);
      const double v = p.albedo * (0.8 + 0.4 * albedo_var) * 0.45 + p.shade_gain * lambert;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

/// Stamps every plant overlapping `region` into `img` (img covers `region`).
inline void stamp_plants(GrayImage& img, const geo::PixelRect& region, const std::vector<Plant>& plants) {
  for (const auto& plant : plants) {
    const auto overlap = geo::intersect(region, plant.rect());
    if (overlap.empty()) continue;
    paste(img, render_plant(plant), static_cast<int>(plant.x - region.x),
          static_cast<int>(plant.y - region.y));
  }
}

inline GrayImage render_fixture(const TerrainParams& p, const std::vector<Plant>& plants,
                                const geo::PixelRect& region) {
  GrayImage img = render_terrain(p, region);
  stamp_plants(img, region, plants);
  return img;
}

/// Face-free backgrounds for negative bootstrapping: `count` terrain
/// patches with distinct seeds, taken far apart on the global grid.
inline std::vector<GrayImage> terrain_pool(int count, int size = 512, std::uint64_t first_seed = 1000) {
  std::vector<GrayImage> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    TerrainParams tp;
    tp.seed = first_seed + static_cast<std::uint64_t>(i);
    out.push_back(render_terrain(tp, {static_cast<std::int64_t>(i) * 4096, 0, size, size}));
  }
  return out;
}

/// Places `count` non-overlapping plants of the given kind in `area`, with
/// sizes drawn in [min_size, max_size] and `gap` pixels between them.
inline std::vector<Plant> scatter_plants(std::uint64_t seed, PlantKind kind, int count,
                                         const geo::PixelRect& area, int min_size, int max_size,
                                         int gap = 16, const std::vector<Plant>& avoid = {}) {
  Rng rng(seed);
  std::vector<Plant> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 100000) fail(ErrorCode::kInvalidArgument, "cannot place plants without overlap");
    Plant p;
    p.kind = kind;
    p.size = static_cast<int>(rng.uniform_int(min_size, max_size));
    p.x = area.x + rng.uniform_int(0, area.w - p.size);
    p.y = area.y + rng.uniform_int(0, area.h - p.size);
    p.seed = rng.next();
    const geo::PixelRect grown{p.x - gap, p.y - gap, p.size + 2 * gap, p.size + 2 * gap};
    bool clash = false;
    for (const std::vector<Plant>* list : {static_cast<const std::vector<Plant>*>(&out), &avoid})
      for (const auto& q : *list)
        if (!geo::intersect(grown, q.rect()).empty()) clash = true;
    if (!clash) out.push_back(p);
  }
  return out;
}

}  // namespace facescan::tiles
