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

// Synthetic positives: simplified face icons (outline, two eyes, a mouth)
// rasterized with supersampling and randomized geometry.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "facescan/common.hpp"
#include "facescan/imaging.hpp"
#include "facescan/rng.hpp"

namespace facescan::classifier {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool valid() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }
  double draw(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
};

enum class FaceShape { kCircle, kEllipse };

/// Ranges are fractions of the icon size unless noted.
struct IconParams {
  double ellipse_probability = 0.5;  // share of icons with an elliptical outline
  Range face_radius{0.38, 0.44};
  Range ellipse_aspect{1.04, 1.13};  // vertical / horizontal radius
  Range outline_thickness{0.05, 0.085};
  Range eye_span{0.30, 0.40};  // distance between eye centers
  Range eye_height{0.07, 0.15};  // eye centers above face center
  Range eye_radius{0.055, 0.08};
  Range mouth_width{0.28, 0.40};
  Range mouth_height{0.12, 0.20};  // mouth corners below face center
  Range mouth_curvature{0.02, 0.10};  // depth of the smile arc
  Range rotation_deg{-15.0, 15.0};
  Range background{150.0, 235.0};  // gray level
  Range contrast{90.0, 170.0};  // background minus ink
  Range noise_stddev{0.0, 6.0};  // gray levels
  Range offset{-0.03, 0.03};  // face center jitter
  Range zoom{1.0, 1.0};  // whole-drawing scale about the icon center
  std::uint64_t seed = 1;

  static IconParams standard(std::uint64_t seed = 1) {
    IconParams p;
    p.seed = seed;
    return p;
  }

  /// Standard icons framed loosely, as a sliding window sees them between
  /// scale steps and grid positions.
  static IconParams jittered(std::uint64_t seed = 1) {
    IconParams p;
    p.seed = seed;
    p.offset = {-0.045, 0.045};
    p.zoom = {0.88, 1.12};
    return p;
  }

  /// Higher-contrast, big-eyed icons for the stylized ensemble member.
  static IconParams stylized(std::uint64_t seed = 1) {
    IconParams p;
    p.seed = seed;
    p.eye_radius = {0.10, 0.13};
    p.eye_span = {0.34, 0.42};
    p.eye_height = {0.04, 0.10};
    p.mouth_width = {0.16, 0.26};
    p.mouth_height = {0.18, 0.24};
    p.mouth_curvature = {0.01, 0.05};
    p.contrast = {150.0, 210.0};
    p.background = {200.0, 245.0};
    return p;
  }

  void validate() const {
    const std::array<const Range*, 15> ranges{
        &face_radius, &ellipse_aspect, &outline_thickness, &eye_span, &eye_height,
        &eye_radius, &mouth_width, &mouth_height, &mouth_curvature, &rotation_deg,
        &background, &contrast, &noise_stddev, &offset, &zoom};
    for (const Range* r : ranges)
      if (!r->valid()) fail(ErrorCode::kDegenerate, "icon parameter range is empty or not finite");
    if (!(ellipse_probability >= 0.0 && ellipse_probability <= 1.0))
      fail(ErrorCode::kDegenerate, "ellipse probability outside [0, 1]");
    if (face_radius.lo <= 0.0 || face_radius.hi > 0.5 || face_radius.hi * ellipse_aspect.hi > 0.5)
      fail(ErrorCode::kDegenerate, "face outline must fit inside the icon");
    if (ellipse_aspect.lo < 1.0) fail(ErrorCode::kDegenerate, "ellipse aspect must be >= 1");
    if (outline_thickness.lo <= 0.0 || eye_radius.lo <= 0.0 || mouth_width.lo <= 0.0)
      fail(ErrorCode::kDegenerate, "stroke and feature sizes must be positive");
    if (contrast.lo <= 0.0) fail(ErrorCode::kDegenerate, "contrast must be positive");
    if (background.lo < 0.0 || background.hi > 255.0)
      fail(ErrorCode::kDegenerate, "background must be a gray level");
    if (noise_stddev.lo < 0.0) fail(ErrorCode::kDegenerate, "noise stddev must be >= 0");
    if (zoom.lo <= 0.0) fail(ErrorCode::kDegenerate, "zoom must be positive");
    if (offset.lo < -0.25 || offset.hi > 0.25) fail(ErrorCode::kDegenerate, "offset must stay within +-0.25");
    if (std::abs(rotation_deg.lo) > 90.0 || std::abs(rotation_deg.hi) > 90.0)
      fail(ErrorCode::kDegenerate, "rotation must stay within +-90 degrees");
  }
};

/// One concrete icon; all lengths are fractions of the icon size, measured in
/// the face frame (before rotation) relative to the face center.
struct IconInstance {
  FaceShape shape = FaceShape::kCircle;
  double center_dx = 0.0;
  double center_dy = 0.0;
  double radius_x = 0.43;
  double radius_y = 0.43;
  double thickness = 0.07;
  double eye_span = 0.35;
  double eye_height = 0.1;
  double eye_radius = 0.07;
  double mouth_width = 0.34;
  double mouth_height = 0.16;
  double mouth_curvature = 0.06;
  double rotation_rad = 0.0;
  double background = 200.0;
  double ink = 60.0;
  double noise_stddev = 0.0;
  double zoom = 1.0;
  std::uint64_t noise_seed = 0;
  bool draw_outline = true;
  bool draw_mouth = true;

  /// Eye centers in pixel coordinates for an icon rendered at `size`.
  std::array<std::pair<double, double>, 2> eye_centers(int size) const {
    std::array<std::pair<double, double>, 2> out{};
    const double c = std::cos(rotation_rad), s = std::sin(rotation_rad);
    for (int i = 0; i < 2; ++i) {
      const double fx = (i == 0 ? -0.5 : 0.5) * eye_span;
      const double fy = -eye_height;
      const double ux = 0.5 + zoom * (center_dx + c * fx - s * fy);
      const double uy = 0.5 + zoom * (center_dy + s * fx + c * fy);
      out[i] = {ux * size, uy * size};
    }
    return out;
  }
};

inline IconInstance draw_icon_instance(Rng& rng, const IconParams& p) {
  IconInstance ic;
  ic.shape = rng.bernoulli(p.ellipse_probability) ? FaceShape::kEllipse : FaceShape::kCircle;
  ic.radius_x = p.face_radius.draw(rng);
  const double aspect = p.ellipse_aspect.draw(rng);
  ic.radius_y = ic.shape == FaceShape::kEllipse ? ic.radius_x * aspect : ic.radius_x;
  ic.center_dx = p.offset.draw(rng);
  ic.center_dy = p.offset.draw(rng);
  ic.thickness = p.outline_thickness.draw(rng);
  ic.eye_span = p.eye_span.draw(rng);
  ic.eye_height = p.eye_height.draw(rng);
  ic.eye_radius = p.eye_radius.draw(rng);
  ic.mouth_width = p.mouth_width.draw(rng);
  ic.mouth_height = p.mouth_height.draw(rng);
  ic.mouth_curvature = p.mouth_curvature.draw(rng);
  ic.rotation_rad = p.rotation_deg.draw(rng) * std::numbers::pi / 180.0;
  ic.background = p.background.draw(rng);
  ic.ink = std::max(0.0, ic.background - p.contrast.draw(rng));
  ic.noise_stddev = p.noise_stddev.draw(rng);
  ic.zoom = p.zoom.draw(rng);
  ic.noise_seed = rng.next();
  return ic;
}

namespace detail {

// True when the face-frame point (fx, fy) is covered by ink.
inline bool icon_ink(const IconInstance& ic, double fx, double fy) {
  if (ic.draw_outline) {
    const double nx = fx / ic.radius_x;
    const double ny = fy / ic.radius_y;
    const double d = std::sqrt(nx * nx + ny * ny);
    if (std::abs(d - 1.0) * std::min(ic.radius_x, ic.radius_y) < 0.5 * ic.thickness) return true;
  }
  for (double side : {-0.5, 0.5}) {
    const double ex = (fx - side * ic.eye_span) / ic.eye_radius;
    const double ey = (fy + ic.eye_height) / (ic.eye_radius * 1.15);
    if (ex * ex + ey * ey <= 1.0) return true;
  }
  if (ic.draw_mouth) {
    const double half = 0.5 * ic.mouth_width;
    if (std::abs(fx) <= half) {
      const double t = fx / half;
      const double curve_y = ic.mouth_height + ic.mouth_curvature * (1.0 - t * t);
      if (std::abs(fy - curve_y) < 0.5 * ic.thickness) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Rasterizes an icon at `size` x `size` with 4x4 supersampling, then adds
/// noise and quantizes to 8 bits.
inline GrayImage render_icon(const IconInstance& ic, int size) {
  if (size < 1) fail(ErrorCode::kInvalidArgument, "icon size must be >= 1");
  constexpr int kSub = 4;
  GrayImage out(size, size);
  Rng noise(ic.noise_seed);
  const double c = std::cos(ic.rotation_rad), s = std::sin(ic.rotation_rad);
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double u = ((px + (sx + 0.5) / kSub) / size - 0.5) / ic.zoom - ic.center_dx;
          const double v = ((py + (sy + 0.5) / kSub) / size - 0.5) / ic.zoom - ic.center_dy;
          // Inverse rotation into the face frame.
          const double fx = c * u + s * v;
          const double fy = -s * u + c * v;
          hits += detail::icon_ink(ic, fx, fy) ? 1 : 0;
        }
      }
      const double cover = static_cast<double>(hits) / (kSub * kSub);
      double value = ic.background + (ic.ink - ic.background) * cover;
      if (ic.noise_stddev > 0.0) value += noise.normal(0.0, ic.noise_stddev);
      out.at(px, py) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return out;
}

struct Sample {
  GrayImage window;
  int label = 1;  // +1 face, -1 background
  double weight = 1.0;
};

/// `count` base-window positives, deterministic in `params.seed`.
inline std::vector<Sample> generate_face_icons(int count, const IconParams& params,
                                               int base_window = kBaseWindow) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "icon count must be >= 1");
  params.validate();
  Rng rng(params.seed);
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const IconInstance ic = draw_icon_instance(rng, params);
    out.push_back({render_icon(ic, base_window), 1, 1.0 / count});
  }
  return out;
}

}  // namespace facescan::classifier
