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
#include <numbers>

#include "facescan/geo.hpp"
#include "facescan/rng.hpp"

namespace facescan::geo {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(Geo, BodyNamesRoundTrip) {
  for (auto b : {Body::earth(), Body::mars(), Body::moon()}) {
    EXPECT_EQ(body_from_string(to_string(b.name)).name, b.name);
    EXPECT_EQ(Body::from(b.name).radius_m, b.radius_m);
  }
  EXPECT_THROW(body_from_string("pluto"), Error);
}

TEST(Geo, WebMercatorLatitudeLimit) {
  // Oracle: the Gudermannian of pi, 2 atan(e^pi) - pi/2.
  const double oracle = (2.0 * std::atan(std::exp(kPi)) - kPi / 2.0) * 180.0 / kPi;
  EXPECT_NEAR(web_mercator_max_lat_deg(), oracle, 1e-12);
  EXPECT_NEAR(web_mercator_max_lat_deg(), 85.0511287798066, 1e-10);
}

TEST(Geo, EquirectangularTileBounds) {
  const auto p = Projection::make(ProjectionKind::kEquirectangular, Body::moon());
  const auto b = tile_lonlat_bounds({2, 1, 3, Body::moon(), "x"}, p);
  EXPECT_DOUBLE_EQ(b.west, -90.0);
  EXPECT_DOUBLE_EQ(b.east, 0.0);
  EXPECT_DOUBLE_EQ(b.north, -45.0);
  EXPECT_DOUBLE_EQ(b.south, -90.0);
}

TEST(Geo, MercatorPixelOfKnownPoint) {
  const auto p = Projection::make(ProjectionKind::kWebMercator, Body::earth());
  // Oracle: y = R ln tan(pi/4 + phi/2), mapped from [-pi R, pi R] to [size, 0].
  const double phi = 45.0 * kPi / 180.0;
  const double y_norm = std::log(std::tan(kPi / 4.0 + phi / 2.0)) / kPi;
  const auto px = lonlat_to_pixel({90.0, 45.0}, p, 3);
  EXPECT_NEAR(px.px, 0.75 * 2048.0, 1e-9);
  EXPECT_NEAR(px.py, (1.0 - y_norm) / 2.0 * 2048.0, 1e-9);
}

TEST(Geo, PolarStereographicRadiusMatchesTangentLaw) {
  const auto p = Projection::make(ProjectionKind::kPolarStereographicNorth, Body::moon(), 30.0);
  const double size = 256.0 * 16.0;
  const auto c = lonlat_to_pixel({0.0, 90.0}, p, 4);
  EXPECT_NEAR(c.px, size / 2.0, 1e-9);
  EXPECT_NEAR(c.py, size / 2.0, 1e-9);
  // The mosaic edge midpoint sits at the extent latitude: rho = 2R tan(15 deg).
  const double half = 2.0 * Body::moon().radius_m * std::tan(15.0 * kPi / 180.0);
  EXPECT_NEAR(p.polar_half_width_m(), half, 1e-6);
  const auto edge = lonlat_to_pixel({90.0, 60.0}, p, 4);
  EXPECT_NEAR(edge.px, size, 1e-6);
  EXPECT_NEAR(edge.py, size / 2.0, 1e-6);
}

TEST(Geo, OutOfRangeInputsRejected) {
  const auto eq = Projection::make(ProjectionKind::kEquirectangular, Body::moon());
  EXPECT_THROW(pixel_to_lonlat({-1.0, 0.0, 0, 256}, eq), Error);
  EXPECT_THROW(pixel_to_lonlat({256.0, 0.0, 0, 256}, eq), Error);
  EXPECT_THROW(lonlat_to_pixel({0.0, 91.0}, eq, 0), Error);
  const auto wm = Projection::make(ProjectionKind::kWebMercator, Body::earth());
  EXPECT_THROW(lonlat_to_pixel({0.0, 89.0}, wm, 0), Error);
  const auto ps = Projection::make(ProjectionKind::kPolarStereographicSouth, Body::moon());
  EXPECT_THROW(Projection::make(ProjectionKind::kWebMercator, Body::mars()), Error);
  EXPECT_THROW(Projection::make(ProjectionKind::kPolarStereographicNorth, Body::earth()), Error);
  EXPECT_THROW(lonlat_to_pixel({0.0, 0.0}, ps, 0), Error);
  EXPECT_THROW(tile_lonlat_bounds({1, 0, 0, Body::moon(), ""}, ps), Error);
}

TEST(Geo, PixelRectIntersection) {
  EXPECT_EQ(intersect({0, 0, 10, 10}, {5, 5, 10, 10}), (PixelRect{5, 5, 5, 5}));
  EXPECT_TRUE(intersect({0, 0, 10, 10}, {10, 0, 5, 5}).empty());
}

TEST(Geo, RoundTripsSmallSample) {
  Rng rng(3);
  for (auto kind : {ProjectionKind::kEquirectangular, ProjectionKind::kWebMercator,
                    ProjectionKind::kPolarStereographicNorth, ProjectionKind::kPolarStereographicSouth}) {
    const auto proj = Projection::make(kind, kind == ProjectionKind::kWebMercator ? Body::earth() : Body::moon());
    for (int i = 0; i < 500; ++i) {
      const int z = static_cast<int>(rng.uniform_int(0, 18));
      const PixelPoint p{rng.uniform(1.0, 256.0 * std::ldexp(1.0, z) - 1.0),
                         rng.uniform(1.0, 256.0 * std::ldexp(1.0, z) - 1.0), z, 256};
      if (is_polar(kind)) {
        const double c = p.mosaic_size() / 2.0;
        if (std::hypot(p.px - c, p.py - c) > c || std::hypot(p.px - c, p.py - c) < 1.0) continue;
      }
      const auto back = lonlat_to_pixel(pixel_to_lonlat(p, proj), proj, z);
      EXPECT_NEAR(back.px, p.px, 1e-6);
      EXPECT_NEAR(back.py, p.py, 1e-6);
    }
  }
}

}  // namespace
}  // namespace facescan::geo
