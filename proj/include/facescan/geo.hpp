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

// Planetary coordinate systems: spherical bodies, power-of-two tile pyramids
// and the three mosaic projections we scan (Web Mercator for Earth,
// equirectangular for global Mars/Moon mosaics, polar stereographic for the
// lunar pole mosaics).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include "facescan/common.hpp"

namespace facescan::geo {

enum class BodyName { kEarth, kMars, kMoon };

struct Body {
  BodyName name;
  double radius_m;

  static constexpr Body earth() { return {BodyName::kEarth, 6378137.0}; }
  static constexpr Body mars() { return {BodyName::kMars, 3396190.0}; }
  static constexpr Body moon() { return {BodyName::kMoon, 1737400.0}; }
  static constexpr Body from(BodyName n) {
    return n == BodyName::kEarth ? earth() : n == BodyName::kMars ? mars() : moon();
  }

  friend bool operator==(const Body&, const Body&) = default;
};

inline std::string_view to_string(BodyName b) {
  switch (b) {
    case BodyName::kEarth: return "earth";
    case BodyName::kMars: return "mars";
    case BodyName::kMoon: return "moon";
  }
  return "?";
}

inline Body body_from_string(std::string_view s) {
  if (s == "earth") return Body::earth();
  if (s == "mars") return Body::mars();
  if (s == "moon") return Body::moon();
  fail(ErrorCode::kInvalidArgument, "unknown body '" + std::string(s) + "'");
}

enum class ProjectionKind {
  kWebMercator,
  kEquirectangular,
  kPolarStereographicNorth,
  kPolarStereographicSouth,
};

inline std::string_view to_string(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::kWebMercator: return "web_mercator";
    case ProjectionKind::kEquirectangular: return "equirectangular";
    case ProjectionKind::kPolarStereographicNorth: return "polar_stereographic_north";
    case ProjectionKind::kPolarStereographicSouth: return "polar_stereographic_south";
  }
  return "?";
}

inline ProjectionKind projection_kind_from_string(std::string_view s) {
  if (s == "web_mercator") return ProjectionKind::kWebMercator;
  if (s == "equirectangular") return ProjectionKind::kEquirectangular;
  if (s == "polar_stereographic_north") return ProjectionKind::kPolarStereographicNorth;
  if (s == "polar_stereographic_south") return ProjectionKind::kPolarStereographicSouth;
  fail(ErrorCode::kInvalidArgument, "unknown projection '" + std::string(s) + "'");
}

inline bool is_polar(ProjectionKind k) {
  return k == ProjectionKind::kPolarStereographicNorth ||
         k == ProjectionKind::kPolarStereographicSouth;
}

/// Projection of a body's mosaic onto the square pixel plane of the tile
/// pyramid. Polar mosaics cover the disk within `polar_extent_deg` of the pole
/// (inscribed in the square); scale factor is 1 at the pole.
class Projection {
 public:
  static Projection make(ProjectionKind kind, Body body, double polar_extent_deg = 30.0) {
    if (kind == ProjectionKind::kWebMercator && body.name != BodyName::kEarth)
      fail(ErrorCode::kInvalidArgument, "web_mercator is only valid for earth");
    if (is_polar(kind) && body.name != BodyName::kMoon)
      fail(ErrorCode::kInvalidArgument, "polar stereographic mosaics are only valid for the moon");
    if (!(polar_extent_deg > 0.0 && polar_extent_deg < 180.0))
      fail(ErrorCode::kInvalidArgument, "polar extent must be in (0, 180) degrees");
    return Projection(kind, body, polar_extent_deg);
  }

  ProjectionKind kind() const { return kind_; }
  const Body& body() const { return body_; }
  double polar_extent_deg() const { return polar_extent_deg_; }

  /// Half-width of a polar mosaic in projected meters.
  double polar_half_width_m() const {
    return 2.0 * body_.radius_m * std::tan(polar_extent_deg_ * std::numbers::pi / 360.0);
  }

 private:
  Projection(ProjectionKind kind, Body body, double extent)
      : kind_(kind), body_(body), polar_extent_deg_(extent) {}

  ProjectionKind kind_;
  Body body_;
  double polar_extent_deg_;
};

struct TileCoord {
  int z = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;
  Body body = Body::earth();
  std::string layer;

  bool valid() const {
    if (z < 0 || z > 30) return false;
    const std::int64_t n = std::int64_t{1} << z;
    return x >= 0 && x < n && y >= 0 && y < n;
  }

  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

struct LonLat {
  double lon_deg = 0.0;
  double lat_deg = 0.0;

  bool valid() const {
    return lon_deg >= -180.0 && lon_deg < 180.0 && lat_deg >= -90.0 && lat_deg <= 90.0;
  }

  friend bool operator==(const LonLat&, const LonLat&) = default;
};

struct PixelPoint {
  double px = 0.0;
  double py = 0.0;
  int zoom = 0;
  int tile_size = 256;

  double mosaic_size() const { return static_cast<double>(tile_size) * std::ldexp(1.0, zoom); }
};

/// Axis-aligned integer rectangle in global mosaic pixels.
struct PixelRect {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;

  std::int64_t area() const { return w * h; }
  bool empty() const { return w <= 0 || h <= 0; }
  std::int64_t right() const { return x + w; }
  std::int64_t bottom() const { return y + h; }

  bool contains(std::int64_t px, std::int64_t py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  const std::int64_t x0 = std::max(a.x, b.x);
  const std::int64_t y0 = std::max(a.y, b.y);
  const std::int64_t x1 = std::min(a.right(), b.right());
  const std::int64_t y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
  return {x0, y0, x1 - x0, y1 - y0};
}

struct LonLatBox {
  double west = 0.0;
  double south = 0.0;
  double east = 0.0;
  double north = 0.0;

  bool contains(const LonLat& g) const {
    return g.lon_deg >= west && g.lon_deg <= east && g.lat_deg >= south && g.lat_deg <= north;
  }
};

/// Latitude limit of the square Web Mercator world, atan(sinh(pi)).
inline double web_mercator_max_lat_deg() {
  return std::atan(std::sinh(std::numbers::pi)) * 180.0 / std::numbers::pi;
}

inline PixelPoint tile_pixel_origin(const TileCoord& t, int tile_size = 256) {
  if (!t.valid()) fail(ErrorCode::kOutOfRange, "tile coordinate outside pyramid");
  return {static_cast<double>(t.x * tile_size), static_cast<double>(t.y * tile_size), t.z,
          tile_size};
}

namespace detail {

constexpr double kDeg = 180.0 / std::numbers::pi;
constexpr double kRad = std::numbers::pi / 180.0;

inline double wrap_lon(double lon) {
  if (lon >= 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  return lon;
}

}  // namespace detail

inline LonLat pixel_to_lonlat(const PixelPoint& p, const Projection& proj) {
  const double size = p.mosaic_size();
  if (!(p.px >= 0.0 && p.px < size && p.py >= 0.0 && p.py < size))
    fail(ErrorCode::kOutOfRange, "pixel outside mosaic");
  const double u = p.px / size;
  const double v = p.py / size;
  switch (proj.kind()) {
    case ProjectionKind::kEquirectangular:
      return {u * 360.0 - 180.0, 90.0 - v * 180.0};
    case ProjectionKind::kWebMercator: {
      const double lat = std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * v)));
      return {u * 360.0 - 180.0, lat * detail::kDeg};
    }
    case ProjectionKind::kPolarStereographicNorth:
    case ProjectionKind::kPolarStereographicSouth: {
      const bool north = proj.kind() == ProjectionKind::kPolarStereographicNorth;
      const double half = proj.polar_half_width_m();
      const double x = (2.0 * u - 1.0) * half;
      const double y = (1.0 - 2.0 * v) * half;
      const double rho = std::hypot(x, y);
      const double two_r = 2.0 * proj.body().radius_m;
      double lat, lon;
      if (north) {
        lat = std::numbers::pi / 2.0 - 2.0 * std::atan(rho / two_r);
        lon = std::atan2(x, -y);
      } else {
        lat = 2.0 * std::atan(rho / two_r) - std::numbers::pi / 2.0;
        lon = std::atan2(x, y);
      }
      return {detail::wrap_lon(lon * detail::kDeg), lat * detail::kDeg};
    }
  }
  fail(ErrorCode::kInvalidArgument, "unknown projection");
}

/// Inverse of pixel_to_lonlat. The result may sit on the closed far edge of
/// the mosaic (e.g. latitude -90 in equirectangular maps to py == size).
inline PixelPoint lonlat_to_pixel(const LonLat& g, const Projection& proj, int zoom,
                                  int tile_size = 256) {
  if (!(g.lon_deg >= -180.0 && g.lon_deg <= 180.0 && g.lat_deg >= -90.0 && g.lat_deg <= 90.0))
    fail(ErrorCode::kOutOfRange, "longitude/latitude out of range");
  PixelPoint out{0.0, 0.0, zoom, tile_size};
  const double size = out.mosaic_size();
  switch (proj.kind()) {
    case ProjectionKind::kEquirectangular:
      out.px = (g.lon_deg + 180.0) / 360.0 * size;
      out.py = (90.0 - g.lat_deg) / 180.0 * size;
      return out;
    case ProjectionKind::kWebMercator: {
      if (std::abs(g.lat_deg) > web_mercator_max_lat_deg())
        fail(ErrorCode::kOutOfRange, "latitude outside Web Mercator limit");
      const double phi = g.lat_deg * detail::kRad;
      out.px = (g.lon_deg + 180.0) / 360.0 * size;
      out.py = (1.0 - std::asinh(std::tan(phi)) / std::numbers::pi) / 2.0 * size;
      return out;
    }
    case ProjectionKind::kPolarStereographicNorth:
    case ProjectionKind::kPolarStereographicSouth: {
      const bool north = proj.kind() == ProjectionKind::kPolarStereographicNorth;
      const double phi = g.lat_deg * detail::kRad;
      const double lam = g.lon_deg * detail::kRad;
      const double two_r = 2.0 * proj.body().radius_m;
      double x, y;
      if (north) {
        if (g.lat_deg <= -90.0) fail(ErrorCode::kOutOfRange, "south pole not representable");
        const double rho = two_r * std::tan(std::numbers::pi / 4.0 - phi / 2.0);
        x = rho * std::sin(lam);
        y = -rho * std::cos(lam);
      } else {
        if (g.lat_deg >= 90.0) fail(ErrorCode::kOutOfRange, "north pole not representable");
        const double rho = two_r * std::tan(std::numbers::pi / 4.0 + phi / 2.0);
        x = rho * std::sin(lam);
        y = rho * std::cos(lam);
      }
      const double half = proj.polar_half_width_m();
      out.px = (x / half + 1.0) / 2.0 * size;
      out.py = (1.0 - y / half) / 2.0 * size;
      if (!(out.px >= 0.0 && out.px <= size && out.py >= 0.0 && out.py <= size))
        fail(ErrorCode::kOutOfRange, "point outside polar mosaic extent");
      return out;
    }
  }
  fail(ErrorCode::kInvalidArgument, "unknown projection");
}

/// Geographic bounds of a tile. Only defined for the rectilinear projections,
/// where longitude and latitude are separable in pixel space.
inline LonLatBox tile_lonlat_bounds(const TileCoord& t, const Projection& proj) {
  if (!t.valid()) fail(ErrorCode::kOutOfRange, "tile coordinate outside pyramid");
  if (is_polar(proj.kind()))
    fail(ErrorCode::kInvalidArgument, "tile bounds are not rectilinear in polar projections");
  const double n = std::ldexp(1.0, t.z);
  const auto lat_at = [&](double v) {
    if (proj.kind() == ProjectionKind::kEquirectangular) return 90.0 - v * 180.0;
    return std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * v))) * detail::kDeg;
  };
  LonLatBox box;
  box.west = static_cast<double>(t.x) / n * 360.0 - 180.0;
  box.east = static_cast<double>(t.x + 1) / n * 360.0 - 180.0;
  box.north = lat_at(static_cast<double>(t.y) / n);
  box.south = lat_at(static_cast<double>(t.y + 1) / n);
  return box;
}

}  // namespace facescan::geo
