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

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "facescan/classifier/boost.hpp"
#include "facescan/classifier/features.hpp"
#include "facescan/imaging.hpp"

namespace facescan::classifier {

struct WeakClassifier {
  Feature feature;
  double threshold = 0.0;
  int polarity = 1;
  double alpha = 0.0;

  friend bool operator==(const WeakClassifier&, const WeakClassifier&) = default;
};

/// A window passes iff sum(alpha_i * h_i) >= threshold.
struct CascadeStage {
  std::vector<WeakClassifier> weak;
  double threshold = 0.0;

  friend bool operator==(const CascadeStage&, const CascadeStage&) = default;
};

struct Cascade {
  int base_window = kBaseWindow;
  FeatureFamily family = FeatureFamily::kHaar;
  std::uint64_t seed = 0;
  std::vector<CascadeStage> stages;
  /// Training provenance, serialized in order.
  std::vector<std::pair<std::string, std::string>> metadata;

  std::size_t weak_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.weak.size();
    return n;
  }

  friend bool operator==(const Cascade&, const Cascade&) = default;
};

struct ClassifyResult {
  bool accepted = false;
  double score = 0.0;  // margin of the last evaluated stage
  int stages_evaluated = 0;
};

/// A cascade with every feature resolved to pixel offsets at one scale.
class ScaledCascade {
 public:
  ScaledCascade(const Cascade& c, double scale) : scale_(scale) {
    window_ = scaled_window(c.base_window, scale);
    stages_.reserve(c.stages.size());
    for (const auto& st : c.stages) {
      Stage s;
      s.threshold = st.threshold;
      s.first = weak_.size();
      for (const auto& w : st.weak) {
        Weak sw;
        sw.threshold = w.threshold;
        sw.polarity = w.polarity;
        sw.alpha = w.alpha;
        if (const auto* h = std::get_if<HaarFeature>(&w.feature)) {
          sw.haar = scale_haar(*h, scale);
        } else {
          sw.is_bbf = true;
          sw.bbf = scale_bbf(std::get<BBFFeature>(w.feature), scale);
        }
        weak_.push_back(sw);
      }
      s.last = weak_.size();
      stages_.push_back(s);
    }
  }

  double scale() const { return scale_; }
  int window() const { return window_; }
  std::size_t stage_count() const { return stages_.size(); }

  /// Caller guarantees the window lies inside `ii`.
  ClassifyResult classify(const IntegralImage& ii, int ox, int oy, double inv_stddev) const {
    ClassifyResult r;
    for (const Stage& s : stages_) {
      double sum = 0.0;
      for (std::size_t k = s.first; k < s.last; ++k) {
        const Weak& w = weak_[k];
        const double v = w.is_bbf ? static_cast<double>(eval_scaled_bbf(ii, w.bbf, ox, oy))
                                  : eval_scaled_haar(ii, w.haar, ox, oy, inv_stddev);
        sum += w.polarity * (v - w.threshold) > 0.0 ? w.alpha : -w.alpha;
      }
      ++r.stages_evaluated;
      r.score = sum - s.threshold;
      if (sum < s.threshold) return r;
    }
    r.accepted = true;
    return r;
  }

 private:
  struct Weak {
    ScaledHaar haar;
    ScaledBBF bbf;
    bool is_bbf = false;
    double threshold = 0.0;
    int polarity = 1;
    double alpha = 0.0;
  };
  struct Stage {
    double threshold = 0.0;
    std::size_t first = 0;
    std::size_t last = 0;
  };

  double scale_;
  int window_ = 0;
  std::vector<Weak> weak_;
  std::vector<Stage> stages_;
};

/// Evaluates stages in order and stops at the first failing one.
inline ClassifyResult classify_window(const Cascade& c, const IntegralImage& ii, int ox, int oy,
                                      double scale, double inv_stddev) {
  const ScaledCascade sc(c, scale);
  if (!ii.contains({ox, oy, sc.window(), sc.window()}))
    fail(ErrorCode::kOutOfRange, "window outside image");
  return sc.classify(ii, ox, oy, inv_stddev);
}

/// Stage sum of a base-window patch.
inline double stage_sum(const CascadeStage& s, const IntegralImage& ii, double inv_stddev) {
  double sum = 0.0;
  for (const auto& w : s.weak) {
    const double v = feature_value(w.feature, ii, inv_stddev);
    sum += w.polarity * (v - w.threshold) > 0.0 ? w.alpha : -w.alpha;
  }
  return sum;
}

}  // namespace facescan::classifier
