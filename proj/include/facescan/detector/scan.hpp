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

// Multi-scale sliding-window scanning. Features are scaled, not the image,
// so a giga-pixel region is integrated once per unit.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "facescan/classifier/cascade.hpp"
#include "facescan/imaging.hpp"

namespace facescan::detector {

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct ScanParams {
  double scale_start = 1.0;
  double scale_factor = 1.25;
  double step_base = 2.0;   // step at scale s: max(1, round(step_base * s))
  int step_multiplier = 1;  // coarsens the grid; multiples keep positions nested
  int min_window = 0;       // windows smaller than this are not scanned
  int max_window = 0;       // 0 = bounded only by the image
  bool skip_low_variance = true;
  double variance_threshold = 4.0;  // window stddev below this is skipped
  unsigned threads = 1;

  void validate() const {
    if (!(scale_factor > 1.0)) fail(ErrorCode::kInvalidArgument, "scale factor must be > 1");
    if (!(scale_start > 0.0)) fail(ErrorCode::kInvalidArgument, "scale start must be > 0");
    if (!(step_base > 0.0) || step_multiplier < 1) fail(ErrorCode::kInvalidArgument, "step must be >= 1");
  }

  int step_at(double scale) const {
    return std::max(1, static_cast<int>(std::lround(step_base * scale))) * step_multiplier;
  }
};

struct Detection {
  BBox bbox;
  double score = 0.0;
  std::string detector_id;
  double scale = 1.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Per-scan counters; rejections[k] counts windows rejected at stage k + 1.
struct ScanStats {
  std::uint64_t windows_evaluated = 0;
  std::uint64_t windows_skipped = 0;
  std::uint64_t accepted = 0;
  std::vector<std::uint64_t> rejections;

  void merge(const ScanStats& o) {
    windows_evaluated += o.windows_evaluated;
    windows_skipped += o.windows_skipped;
    accepted += o.accepted;
    if (rejections.size() < o.rejections.size()) rejections.resize(o.rejections.size(), 0);
    for (std::size_t i = 0; i < o.rejections.size(); ++i) rejections[i] += o.rejections[i];
  }

  /// Fraction of evaluated windows rejected within the first `k` stages.
  double rejected_within(std::size_t k) const {
    if (windows_evaluated == 0) return 1.0;
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < std::min(k, rejections.size()); ++i) n += rejections[i];
    return static_cast<double>(n) / static_cast<double>(windows_evaluated);
  }
};

struct ScanResult {
  std::vector<Detection> detections;
  ScanStats stats;
};

/// Scales visited for an image of the given size: geometric from
/// scale_start until the window exceeds the image or max_window.
inline std::vector<double> scan_scales(int width, int height, int base_window, const ScanParams& p) {
  p.validate();
  std::vector<double> out;
  const int limit = std::min(width, height);
  for (double s = p.scale_start;; s *= p.scale_factor) {
    const int win = scaled_window(base_window, s);
    if (win > limit || (p.max_window > 0 && win > p.max_window)) break;
    if (win >= std::max(p.min_window, 1)) out.push_back(s);
    if (out.size() > 10000) break;
  }
  return out;
}

namespace detail {

// First coordinate >= 0 whose global position is a multiple of `step`.
inline int grid_start(std::int64_t offset, int step) {
  const std::int64_t m = ((offset % step) + step) % step;
  return static_cast<int>((step - m) % step);
}

}  // namespace detail

/// Scans an integral image whose pixel (0, 0) sits at global (offset_x,
/// offset_y). Window positions lie on a global grid (multiples of the step),
/// so overlapping regions of one mosaic see identical windows. Output is
/// sorted by (scale, y, x) regardless of thread count.
inline ScanResult scan_integral(const IntegralImage& ii, const classifier::Cascade& cascade,
                                const ScanParams& params, const std::string& detector_id = "",
                                std::int64_t offset_x = 0, std::int64_t offset_y = 0) {
  ScanResult result;
  result.stats.rejections.assign(cascade.stages.size(), 0);
  const auto scales = scan_scales(ii.width(), ii.height(), cascade.base_window, params);
  if (scales.empty()) return result;

  std::vector<classifier::ScaledCascade> scaled;
  scaled.reserve(scales.size());
  for (double s : scales) scaled.emplace_back(cascade, s);

  // Work items are (scale, row) pairs, claimed in order.
  struct Row {
    std::size_t scale;
    int y;
  };
  std::vector<Row> rows;
  for (std::size_t k = 0; k < scaled.size(); ++k) {
    const int win = scaled[k].window();
    const int step = params.step_at(scales[k]);
    for (int y = detail::grid_start(offset_y, step); y + win <= ii.height(); y += step) rows.push_back({k, y});
  }

  const unsigned threads = std::max(1u, std::min<unsigned>(params.threads, static_cast<unsigned>(rows.size())));
  std::vector<ScanResult> partial(threads);
  for (auto& p : partial) p.stats.rejections.assign(cascade.stages.size(), 0);
  std::atomic<std::size_t> next{0};
  const auto worker = [&](unsigned t) {
    ScanResult& out = partial[t];
    for (std::size_t r = next++; r < rows.size(); r = next++) {
      const auto& sc = scaled[rows[r].scale];
      const int win = sc.window();
      const int step = params.step_at(sc.scale());
      const int y = rows[r].y;
      for (int x = detail::grid_start(offset_x, step); x + win <= ii.width(); x += step) {
        const auto stats = window_stats(ii, {x, y, win, win});
        if (params.skip_low_variance && stats.raw_stddev < params.variance_threshold) {
          ++out.stats.windows_skipped;
          continue;
        }
        ++out.stats.windows_evaluated;
        const auto res = sc.classify(ii, x, y, stats.inv_stddev());
        if (!res.accepted) {
          ++out.stats.rejections[res.stages_evaluated - 1];
          continue;
        }
        ++out.stats.accepted;
        out.detections.push_back({{static_cast<double>(offset_x + x), static_cast<double>(offset_y + y),
                                   static_cast<double>(win), static_cast<double>(win)},
                                  res.score,
                                  detector_id,
                                  sc.scale()});
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  for (auto& p : partial) {
    result.stats.merge(p.stats);
    result.detections.insert(result.detections.end(), p.detections.begin(), p.detections.end());
  }
  std::sort(result.detections.begin(), result.detections.end(), [](const Detection& a, const Detection& b) {
    return std::tie(a.scale, a.bbox.y, a.bbox.x) < std::tie(b.scale, b.bbox.y, b.bbox.x);
  });
  return result;
}

inline std::vector<Detection> scan_image(const GrayImage& gray, const classifier::Cascade& cascade,
                                         const ScanParams& params, const std::string& detector_id = "") {
  if (gray.width() < cascade.base_window || gray.height() < cascade.base_window) return {};
  return scan_integral(IntegralImage(gray), cascade, params, detector_id).detections;
}

}  // namespace facescan::detector
