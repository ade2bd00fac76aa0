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

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <variant>
#include <vector>

#include "facescan/imaging.hpp"
#include "facescan/rng.hpp"

namespace facescan::classifier {

enum class FeatureFamily { kHaar, kBBF };

inline std::string_view to_string(FeatureFamily f) { return f == FeatureFamily::kHaar ? "haar" : "bbf"; }

inline FeatureFamily feature_family_from_string(std::string_view s) {
  if (s == "haar") return FeatureFamily::kHaar;
  if (s == "bbf") return FeatureFamily::kBBF;
  fail(ErrorCode::kParse, "unknown feature family '" + std::string(s) + "'");
}

using Feature = std::variant<HaarFeature, BBFFeature>;

/// Every Haar feature that fits the base window, in a fixed enumeration
/// order (kind, cell height, cell width, y, x).
inline std::vector<HaarFeature> all_haar_features(int base_window = kBaseWindow) {
  std::vector<HaarFeature> out;
  for (HaarKind kind : {HaarKind::kTwoRectH, HaarKind::kTwoRectV, HaarKind::kThreeRectH,
                        HaarKind::kThreeRectV, HaarKind::kFourRect}) {
    const auto g = haar_grid(kind);
    for (int ch = 1; ch * g.rows <= base_window; ++ch)
      for (int cw = 1; cw * g.cols <= base_window; ++cw)
        for (int y = 0; y + ch * g.rows <= base_window; ++y)
          for (int x = 0; x + cw * g.cols <= base_window; ++x)
            out.push_back({kind, {x, y, cw * g.cols, ch * g.rows}, base_window});
  }
  return out;
}

/// Seeded subsample of the exhaustive Haar pool, kept in enumeration order.
inline std::vector<Feature> haar_feature_pool(std::size_t max_count, std::uint64_t seed,
                                              int base_window = kBaseWindow) {
  const auto all = all_haar_features(base_window);
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t keep = std::min(max_count, all.size());
  if (keep < all.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < keep; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(all.size() - 1)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<Feature> out;
  out.reserve(keep);
  for (std::size_t i : idx) out.emplace_back(all[i]);
  return out;
}

/// Seeded random rectangle pairs for the brightness-binary family.
inline std::vector<Feature> bbf_feature_pool(std::size_t count, std::uint64_t seed,
                                             int base_window = kBaseWindow) {
  Rng rng(seed);
  const auto random_rect = [&]() {
    const int w = static_cast<int>(rng.uniform_int(2, base_window / 2));
    const int h = static_cast<int>(rng.uniform_int(2, base_window / 2));
    const int x = static_cast<int>(rng.uniform_int(0, base_window - w));
    const int y = static_cast<int>(rng.uniform_int(0, base_window - h));
    return Rect{x, y, w, h};
  };
  std::vector<Feature> out;
  out.reserve(count);
  while (out.size() < count) {
    BBFFeature f{random_rect(), random_rect(), base_window};
    if (f.rect_a == f.rect_b) continue;
    out.emplace_back(f);
  }
  return out;
}

inline std::vector<Feature> feature_pool(FeatureFamily family, std::size_t count,
                                         std::uint64_t seed, int base_window = kBaseWindow) {
  return family == FeatureFamily::kHaar ? haar_feature_pool(count, seed, base_window)
                                        : bbf_feature_pool(count, seed, base_window);
}

/// Feature value on a base-window patch (scale 1, origin 0).
inline double feature_value(const Feature& f, const IntegralImage& ii, double inv_stddev) {
  if (const auto* h = std::get_if<HaarFeature>(&f)) return eval_haar(ii, *h, 0, 0, 1.0, inv_stddev);
  return eval_bbf(ii, std::get<BBFFeature>(f), 0, 0, 1.0);
}

/// A base-window patch prepared for feature evaluation.
struct PreparedPatch {
  IntegralImage ii;
  double inv_stddev = 1.0;
};

inline PreparedPatch prepare_patch(const GrayImage& patch) {
  PreparedPatch p{IntegralImage(patch), 1.0};
  p.inv_stddev = window_stats(p.ii, {0, 0, patch.width(), patch.height()}).inv_stddev();
  return p;
}

}  // namespace facescan::classifier
