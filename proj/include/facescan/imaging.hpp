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

// Pixel-level kernels: grayscale rasters, integral images, window
// normalization and the two feature families evaluated on integral images.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "facescan/common.hpp"

namespace facescan {

inline constexpr int kBaseWindow = 24;

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::int64_t area() const { return std::int64_t{w} * h; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Row-major 8-bit luminance raster.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
    if (width < 1 || height < 1) fail(ErrorCode::kInvalidArgument, "image dimensions must be >= 1");
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) fail(ErrorCode::kInvalidArgument, "image dimensions must be >= 1");
    if (pixels_.size() != static_cast<std::size_t>(width) * height)
      fail(ErrorCode::kInvalidArgument, "pixel count does not match dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> row(int y) const {
    return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

/// ITU-R BT.601 luma, rounded half up.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int v = (299 * r + 587 * g + 114 * b + 500) / 1000;
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

inline GrayImage to_grayscale(const RgbImage& src) {
  if (src.width < 1 || src.height < 1) fail(ErrorCode::kInvalidArgument, "zero-sized image");
  if (src.rgb.size() != static_cast<std::size_t>(src.width) * src.height * 3)
    fail(ErrorCode::kInvalidArgument, "rgb buffer does not match dimensions");
  GrayImage out(src.width, src.height);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = luma(src.rgb[3 * i], src.rgb[3 * i + 1], src.rgb[3 * i + 2]);
  return out;
}

/// Cumulative sums over [0,x) x [0,y), stored (width+1) x (height+1).
/// Signed 64-bit holds the sum of a 2^16 x 2^16 image (2^40) and the
/// squared sums (2^48).
class IntegralImage {
 public:
  IntegralImage() = default;

  explicit IntegralImage(const GrayImage& g) : width_(g.width()), height_(g.height()) {
    stride_ = static_cast<std::size_t>(width_) + 1;
    sums_.assign(stride_ * (static_cast<std::size_t>(height_) + 1), 0);
    squares_.assign(sums_.size(), 0);
    for (int y = 0; y < height_; ++y) {
      std::int64_t row = 0;
      std::int64_t row_sq = 0;
      const auto src = g.row(y);
      const std::size_t above = static_cast<std::size_t>(y) * stride_;
      const std::size_t here = above + stride_;
      for (int x = 0; x < width_; ++x) {
        const std::int64_t v = src[x];
        row += v;
        row_sq += v * v;
        sums_[here + x + 1] = sums_[above + x + 1] + row;
        squares_[here + x + 1] = squares_[above + x + 1] + row_sq;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }

  std::int64_t sum_at(int x, int y) const { return sums_[static_cast<std::size_t>(y) * stride_ + x]; }
  std::int64_t square_at(int x, int y) const {
    return squares_[static_cast<std::size_t>(y) * stride_ + x];
  }

  bool contains(const Rect& r) const {
    return r.x >= 0 && r.y >= 0 && r.w >= 0 && r.h >= 0 && r.x + r.w <= width_ &&
           r.y + r.h <= height_;
  }

  std::int64_t sum_unchecked(int x, int y, int w, int h) const {
    const std::int64_t* top = sums_.data() + static_cast<std::size_t>(y) * stride_ + x;
    const std::int64_t* bot = top + static_cast<std::size_t>(h) * stride_;
    return bot[w] - bot[0] - top[w] + top[0];
  }

  std::int64_t square_sum_unchecked(int x, int y, int w, int h) const {
    const std::int64_t* top = squares_.data() + static_cast<std::size_t>(y) * stride_ + x;
    const std::int64_t* bot = top + static_cast<std::size_t>(h) * stride_;
    return bot[w] - bot[0] - top[w] + top[0];
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::size_t stride_ = 1;
  std::vector<std::int64_t> sums_{0};
  std::vector<std::int64_t> squares_{0};
};

inline IntegralImage integral_image(const GrayImage& g) { return IntegralImage(g); }

inline std::int64_t rect_sum(const IntegralImage& ii, const Rect& r) {
  if (!ii.contains(r)) fail(ErrorCode::kOutOfRange, "rectangle outside image");
  return ii.sum_unchecked(r.x, r.y, r.w, r.h);
}

struct WindowStats {
  double mean = 0.0;
  double raw_stddev = 0.0;  // before the floor
  double stddev = 1.0;      // floored at 1.0

  double inv_stddev() const { return 1.0 / stddev; }
};

inline constexpr double kStddevFloor = 1.0;

inline WindowStats window_stats(const IntegralImage& ii, const Rect& r) {
  if (r.area() < 1) fail(ErrorCode::kInvalidArgument, "window area must be >= 1");
  if (!ii.contains(r)) fail(ErrorCode::kOutOfRange, "window outside image");
  const double area = static_cast<double>(r.area());
  const double mean = static_cast<double>(ii.sum_unchecked(r.x, r.y, r.w, r.h)) / area;
  const double sq = static_cast<double>(ii.square_sum_unchecked(r.x, r.y, r.w, r.h)) / area;
  const double var = std::max(0.0, sq - mean * mean);
  WindowStats s;
  s.mean = mean;
  s.raw_stddev = std::sqrt(var);
  s.stddev = std::max(kStddevFloor, s.raw_stddev);
  return s;
}

// ---------------------------------------------------------------------------
// Features

enum class HaarKind { kTwoRectH, kTwoRectV, kThreeRectH, kThreeRectV, kFourRect };

inline std::string_view to_string(HaarKind k) {
  switch (k) {
    case HaarKind::kTwoRectH: return "two_rect_h";
    case HaarKind::kTwoRectV: return "two_rect_v";
    case HaarKind::kThreeRectH: return "three_rect_h";
    case HaarKind::kThreeRectV: return "three_rect_v";
    case HaarKind::kFourRect: return "four_rect";
  }
  return "?";
}

inline HaarKind haar_kind_from_string(std::string_view s) {
  if (s == "two_rect_h") return HaarKind::kTwoRectH;
  if (s == "two_rect_v") return HaarKind::kTwoRectV;
  if (s == "three_rect_h") return HaarKind::kThreeRectH;
  if (s == "three_rect_v") return HaarKind::kThreeRectV;
  if (s == "four_rect") return HaarKind::kFourRect;
  fail(ErrorCode::kParse, "unknown haar kind '" + std::string(s) + "'");
}

/// Grid of equal cells a Haar kind splits its rectangle into.
struct HaarGrid {
  int cols;
  int rows;
};

inline constexpr HaarGrid haar_grid(HaarKind k) {
  switch (k) {
    case HaarKind::kTwoRectH: return {2, 1};
    case HaarKind::kTwoRectV: return {1, 2};
    case HaarKind::kThreeRectH: return {3, 1};
    case HaarKind::kThreeRectV: return {1, 3};
    case HaarKind::kFourRect: return {2, 2};
  }
  return {1, 1};
}

/// Cell weight; positive cells are "white". Weights sum to zero so constant
/// regions cancel exactly.
inline constexpr int haar_cell_weight(HaarKind k, int col, int row) {
  switch (k) {
    case HaarKind::kTwoRectH: return col == 0 ? 1 : -1;
    case HaarKind::kTwoRectV: return row == 0 ? 1 : -1;
    case HaarKind::kThreeRectH: return col == 1 ? -2 : 1;
    case HaarKind::kThreeRectV: return row == 1 ? -2 : 1;
    case HaarKind::kFourRect: return (col == row) ? 1 : -1;
  }
  return 0;
}

struct HaarFeature {
  HaarKind kind = HaarKind::kTwoRectH;
  Rect rect;  // whole feature, base-window coordinates
  int base_window = kBaseWindow;

  bool valid() const {
    const auto g = haar_grid(kind);
    return rect.w > 0 && rect.h > 0 && rect.w % g.cols == 0 && rect.h % g.rows == 0 &&
           rect.x >= 0 && rect.y >= 0 && rect.x + rect.w <= base_window &&
           rect.y + rect.h <= base_window;
  }

  friend bool operator==(const HaarFeature&, const HaarFeature&) = default;
};

/// Brightness-binary feature: compares the mean brightness of two rectangles.
struct BBFFeature {
  Rect rect_a;
  Rect rect_b;
  int base_window = kBaseWindow;

  bool valid() const {
    const auto inside = [&](const Rect& r) {
      return r.w > 0 && r.h > 0 && r.x >= 0 && r.y >= 0 && r.x + r.w <= base_window &&
             r.y + r.h <= base_window;
    };
    return inside(rect_a) && inside(rect_b);
  }

  friend bool operator==(const BBFFeature&, const BBFFeature&) = default;
};

/// Size of the detection window at `scale`.
inline int scaled_window(int base_window, double scale) {
  return static_cast<int>(std::floor(base_window * scale + 1e-9));
}

inline int scale_floor(int v, double scale) {
  return static_cast<int>(std::floor(v * scale + 1e-9));
}

/// A Haar feature resolved to pixel offsets at one scale. Cells are scaled
/// with a common integer cell size, so white and black areas stay balanced.
struct ScaledHaar {
  std::array<Rect, 4> cells{};
  std::array<double, 4> weights{};
  int count = 0;
  double inv_area = 0.0;
};

inline ScaledHaar scale_haar(const HaarFeature& f, double scale) {
  if (!f.valid()) fail(ErrorCode::kInvalidArgument, "invalid haar feature");
  const auto g = haar_grid(f.kind);
  const int cw = std::max(1, scale_floor(f.rect.w / g.cols, scale));
  const int ch = std::max(1, scale_floor(f.rect.h / g.rows, scale));
  const int x0 = scale_floor(f.rect.x, scale);
  const int y0 = scale_floor(f.rect.y, scale);
  const int window = scaled_window(f.base_window, scale);
  if (x0 + cw * g.cols > window || y0 + ch * g.rows > window)
    fail(ErrorCode::kOutOfRange, "scaled feature exceeds window");
  ScaledHaar s;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      s.cells[s.count] = {x0 + c * cw, y0 + r * ch, cw, ch};
      s.weights[s.count] = haar_cell_weight(f.kind, c, r);
      ++s.count;
    }
  }
  s.inv_area = 1.0 / (static_cast<double>(cw) * g.cols * ch * g.rows);
  return s;
}

/// Raw weighted sum, no normalization; origin in image pixels.
inline double haar_weighted_sum(const IntegralImage& ii, const ScaledHaar& s, int ox, int oy) {
  double acc = 0.0;
  for (int i = 0; i < s.count; ++i) {
    const Rect& c = s.cells[i];
    acc += s.weights[i] * static_cast<double>(ii.sum_unchecked(ox + c.x, oy + c.y, c.w, c.h));
  }
  return acc;
}

inline double eval_scaled_haar(const IntegralImage& ii, const ScaledHaar& s, int ox, int oy,
                               double inv_stddev) {
  return haar_weighted_sum(ii, s, ox, oy) * s.inv_area * inv_stddev;
}

/// Normalized Haar response: (white - black) / area / stddev.
inline double eval_haar(const IntegralImage& ii, const HaarFeature& f, int ox, int oy,
                        double scale, double inv_stddev) {
  const ScaledHaar s = scale_haar(f, scale);
  const int window = scaled_window(f.base_window, scale);
  if (!ii.contains({ox, oy, window, window})) fail(ErrorCode::kOutOfRange, "window outside image");
  return eval_scaled_haar(ii, s, ox, oy, inv_stddev);
}

struct ScaledBBF {
  Rect a;
  Rect b;
};

inline ScaledBBF scale_bbf(const BBFFeature& f, double scale) {
  if (!f.valid()) fail(ErrorCode::kInvalidArgument, "invalid bbf feature");
  const auto scale_rect = [&](const Rect& r) {
    return Rect{scale_floor(r.x, scale), scale_floor(r.y, scale),
                std::max(1, scale_floor(r.w, scale)), std::max(1, scale_floor(r.h, scale))};
  };
  ScaledBBF s{scale_rect(f.rect_a), scale_rect(f.rect_b)};
  const int window = scaled_window(f.base_window, scale);
  for (const Rect& r : {s.a, s.b})
    if (r.x + r.w > window || r.y + r.h > window)
      fail(ErrorCode::kOutOfRange, "scaled feature exceeds window");
  return s;
}

/// 1 iff mean(a) > mean(b); compared exactly in integers, ties give 0.
inline int eval_scaled_bbf(const IntegralImage& ii, const ScaledBBF& s, int ox, int oy) {
  const std::int64_t sa = ii.sum_unchecked(ox + s.a.x, oy + s.a.y, s.a.w, s.a.h);
  const std::int64_t sb = ii.sum_unchecked(ox + s.b.x, oy + s.b.y, s.b.w, s.b.h);
  return sa * s.b.area() > sb * s.a.area() ? 1 : 0;
}

inline int eval_bbf(const IntegralImage& ii, const BBFFeature& f, int ox, int oy, double scale) {
  const ScaledBBF s = scale_bbf(f, scale);
  const int window = scaled_window(f.base_window, scale);
  if (!ii.contains({ox, oy, window, window})) fail(ErrorCode::kOutOfRange, "window outside image");
  return eval_scaled_bbf(ii, s, ox, oy);
}

// ---------------------------------------------------------------------------
// Raster utilities

/// Copy of `r`; pixels outside the source are filled with `fill`.
inline GrayImage crop(const GrayImage& src, const Rect& r, std::uint8_t fill = 0) {
  GrayImage out(r.w, r.h, fill);
  for (int y = 0; y < r.h; ++y) {
    const int sy = r.y + y;
    if (sy < 0 || sy >= src.height()) continue;
    for (int x = 0; x < r.w; ++x) {
      const int sx = r.x + x;
      if (sx < 0 || sx >= src.width()) continue;
      out.at(x, y) = src.at(sx, sy);
    }
  }
  return out;
}

/// Copies `src` into `dst` with its top-left at (x, y), clipped.
inline void paste(GrayImage& dst, const GrayImage& src, int x, int y) {
  for (int sy = 0; sy < src.height(); ++sy) {
    const int dy = y + sy;
    if (dy < 0 || dy >= dst.height()) continue;
    for (int sx = 0; sx < src.width(); ++sx) {
      const int dx = x + sx;
      if (dx < 0 || dx >= dst.width()) continue;
      dst.at(dx, dy) = src.at(sx, sy);
    }
  }
}

namespace detail {

struct Tap {
  int index;
  double weight;
};

// Box-filter taps mapping [start, start+extent) onto `out` equal bins.
inline std::vector<std::vector<Tap>> area_taps(double start, double extent, int out, int limit) {
  std::vector<std::vector<Tap>> taps(out);
  const double step = extent / out;
  for (int i = 0; i < out; ++i) {
    const double a = start + i * step;
    const double b = a + step;
    for (int p = static_cast<int>(std::floor(a)); p < static_cast<int>(std::ceil(b)); ++p) {
      const double lo = std::max(a, static_cast<double>(p));
      const double hi = std::min(b, static_cast<double>(p + 1));
      if (hi <= lo) continue;
      taps[i].push_back({std::clamp(p, 0, limit - 1), (hi - lo) / step});
    }
  }
  return taps;
}

}  // namespace detail

/// Area-averaging resample of the (possibly fractional) source box
/// [x, x+w) x [y, y+h) to out_w x out_h. Edge pixels replicate outward.
inline GrayImage resample_area(const GrayImage& src, double x, double y, double w, double h,
                               int out_w, int out_h) {
  if (w <= 0 || h <= 0) fail(ErrorCode::kInvalidArgument, "empty resample box");
  const auto cols = detail::area_taps(x, w, out_w, src.width());
  const auto rows = detail::area_taps(y, h, out_h, src.height());
  GrayImage out(out_w, out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (const auto& ry : rows[oy])
        for (const auto& cx : cols[ox]) acc += ry.weight * cx.weight * src.at(cx.index, ry.index);
      out.at(ox, oy) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
    }
  }
  return out;
}

inline GrayImage resample_area(const GrayImage& src, int out_w, int out_h) {
  return resample_area(src, 0, 0, src.width(), src.height(), out_w, out_h);
}

/// Population mean and standard deviation of all pixels.
inline std::pair<double, double> image_mean_stddev(const GrayImage& g) {
  double sum = 0.0;
  double sq = 0.0;
  for (auto v : g.pixels()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(g.pixels().size());
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sq / n - mean * mean))};
}

}  // namespace facescan
