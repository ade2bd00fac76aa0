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

// Decision stumps and discrete AdaBoost over a presorted feature matrix.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "facescan/common.hpp"

namespace facescan::classifier {

/// h(v) = +1 iff polarity * (v - threshold) > 0, else -1.
struct Stump {
  double threshold = 0.0;
  int polarity = 1;
  double error = 0.0;

  int predict(double v) const { return polarity * (v - threshold) > 0.0 ? 1 : -1; }
};

namespace detail {

inline double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  // Adjacent doubles can round the midpoint up onto b; keep b strictly above.
  return m >= b ? a : m;
}

// Sorted sweep. Candidate thresholds run ascending: below the minimum, every
// midpoint between distinct values, above the maximum. A candidate replaces
// the incumbent only on strictly smaller error, and polarity +1 is tried
// first, giving the (smaller threshold, then +1) tie rule.
template <typename Value, typename Index>
Stump sweep(std::span<const Value> sorted, std::span<const Index> order,
            std::span<const std::int8_t> labels, std::span<const double> weights,
            double total_pos, double total_neg) {
  const std::size_t n = sorted.size();
  Stump best{static_cast<double>(sorted[0]) - 1.0, 1, total_neg};
  if (total_pos < best.error) best = {best.threshold, -1, total_pos};
  double below_pos = 0.0, below_neg = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = order[k];
    if (labels[i] > 0) below_pos += weights[i];
    else below_neg += weights[i];
    const double v = static_cast<double>(sorted[k]);
    if (k + 1 < n && static_cast<double>(sorted[k + 1]) == v) continue;
    const double theta = k + 1 < n ? midpoint(v, static_cast<double>(sorted[k + 1])) : v + 1.0;
    const double err_plus = below_pos + (total_neg - below_neg);
    const double err_minus = below_neg + (total_pos - below_pos);
    if (err_plus < best.error) best = {theta, 1, err_plus};
    if (err_minus < best.error) best = {theta, -1, err_minus};
  }
  best.error = std::clamp(best.error, 0.0, 1.0);
  return best;
}

}  // namespace detail

/// Minimum weighted-error stump in one sorted sweep. Errors are relative to the
/// total weight.
inline Stump train_stump(std::span<const double> values, std::span<const int> labels,
                         std::span<const double> weights) {
  const std::size_t n = values.size();
  if (labels.size() != n || weights.size() != n)
    fail(ErrorCode::kInvalidArgument, "values, labels and weights differ in length");
  if (n < 2) fail(ErrorCode::kInvalidArgument, "need at least two samples");
  double total_pos = 0.0, total_neg = 0.0;
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 1 && labels[i] != -1) fail(ErrorCode::kInvalidArgument, "labels must be +-1");
    if (!(weights[i] >= 0.0)) fail(ErrorCode::kInvalidArgument, "weights must be >= 0");
    (labels[i] > 0 ? total_pos : total_neg) += weights[i];
    (labels[i] > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) fail(ErrorCode::kDegenerate, "both classes must be present");
  const double total = total_pos + total_neg;
  if (!(total > 0.0)) fail(ErrorCode::kDegenerate, "all weights are zero");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return values[a] < values[b]; });
  std::vector<double> sorted(n), norm(n);
  std::vector<std::int8_t> lab(n);
  for (std::size_t k = 0; k < n; ++k) sorted[k] = values[order[k]];
  for (std::size_t i = 0; i < n; ++i) {
    norm[i] = weights[i] / total;
    lab[i] = static_cast<std::int8_t>(labels[i]);
  }
  return detail::sweep<double, std::uint32_t>(sorted, order, lab, norm, total_pos / total,
                                              total_neg / total);
}

/// alpha = 1/2 ln((1 - eps) / eps).
inline double alpha_from_error(double eps) {
  if (eps >= 0.5) return 0.0;
  return 0.5 * std::log((1.0 - eps) / eps);
}

/// Feature values for every (feature, sample), each row sorted ascending with
/// ties in sample order. Row order survives AdaBoost reweighting, so a stage
/// sorts once and sweeps once per round.
class SortedFeatureMatrix {
 public:
  using Index = std::uint16_t;
  static constexpr std::size_t kMaxSamples = std::numeric_limits<Index>::max();

  /// `fill(feature, out)` writes the values of one feature for all samples.
  SortedFeatureMatrix(std::size_t features, std::size_t samples,
                      const std::function<void(std::size_t, std::span<float>)>& fill,
                      unsigned threads = 1)
      : features_(features), samples_(samples) {
    if (samples > kMaxSamples) fail(ErrorCode::kInvalidArgument, "too many samples for one stage");
    if (features == 0) fail(ErrorCode::kInvalidArgument, "empty feature pool");
    values_.resize(features * samples);
    order_.resize(features * samples);
    parallel_for(features, threads, [&](std::size_t begin, std::size_t end) {
      std::vector<float> row(samples);
      std::vector<Index> idx(samples);
      for (std::size_t f = begin; f < end; ++f) {
        fill(f, row);
        std::iota(idx.begin(), idx.end(), Index{0});
        std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return row[a] < row[b]; });
        float* vals = values_.data() + f * samples;
        Index* ord = order_.data() + f * samples;
        for (std::size_t k = 0; k < samples; ++k) {
          vals[k] = row[idx[k]];
          ord[k] = idx[k];
        }
      }
    });
  }

  std::size_t features() const { return features_; }
  std::size_t samples() const { return samples_; }

  std::span<const float> sorted_values(std::size_t f) const {
    return {values_.data() + f * samples_, samples_};
  }
  std::span<const Index> order(std::size_t f) const { return {order_.data() + f * samples_, samples_}; }

  /// Splits [0, n) into contiguous chunks, one per thread.
  template <typename Fn>
  static void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
      fn(std::size_t{0}, n);
      return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b >= e) break;
      pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
  }

 private:
  std::size_t features_;
  std::size_t samples_;
  std::vector<float> values_;
  std::vector<Index> order_;
};

/// One boosting round's pick.
struct WeakLearner {
  std::size_t feature = 0;
  Stump stump;
  double alpha = 0.0;
};

/// Discrete AdaBoost with h in {-1, +1}. Each step picks the (error, feature
/// index)-minimal stump, so results do not depend on the thread count.
class AdaBoost {
 public:
  static constexpr double kMinError = 1e-10;

  AdaBoost(const SortedFeatureMatrix& matrix, std::vector<std::int8_t> labels,
           std::vector<double> weights, unsigned threads = 1)
      : matrix_(matrix), labels_(std::move(labels)), weights_(std::move(weights)), threads_(threads) {
    if (labels_.size() != matrix.samples() || weights_.size() != matrix.samples())
      fail(ErrorCode::kInvalidArgument, "labels/weights do not match the feature matrix");
    bool pos = false, neg = false;
    for (auto l : labels_) (l > 0 ? pos : neg) = true;
    if (!pos || !neg) fail(ErrorCode::kDegenerate, "both classes must be present");
    normalize();
  }

  /// Weights giving each class half of the total mass.
  static std::vector<double> balanced_weights(std::span<const std::int8_t> labels) {
    std::size_t pos = 0;
    for (auto l : labels) pos += l > 0 ? 1 : 0;
    const std::size_t neg = labels.size() - pos;
    std::vector<double> w(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      w[i] = labels[i] > 0 ? 0.5 / static_cast<double>(pos) : 0.5 / static_cast<double>(neg);
    return w;
  }

  bool halted() const { return halted_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Runs one round. Returns nothing (and halts) when the best error is
  /// >= 0.5; halts after returning when the error is below kMinError.
  std::optional<WeakLearner> step() {
    if (halted_) return std::nullopt;
    double total_pos = 0.0, total_neg = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i)
      (labels_[i] > 0 ? total_pos : total_neg) += weights_[i];

    const std::size_t nf = matrix_.features();
    std::vector<Stump> per_feature(nf);
    SortedFeatureMatrix::parallel_for(nf, threads_, [&](std::size_t b, std::size_t e) {
      for (std::size_t f = b; f < e; ++f)
        per_feature[f] = detail::sweep<float, SortedFeatureMatrix::Index>(
            matrix_.sorted_values(f), matrix_.order(f), labels_, weights_, total_pos, total_neg);
    });
    std::size_t best = 0;
    for (std::size_t f = 1; f < nf; ++f)
      if (per_feature[f].error < per_feature[best].error) best = f;

    const Stump stump = per_feature[best];
    if (stump.error >= 0.5) {
      halted_ = true;
      return std::nullopt;
    }
    const double eps = std::max(stump.error, kMinError);
    const WeakLearner pick{best, stump, alpha_from_error(eps)};
    if (stump.error < kMinError) halted_ = true;

    const auto values = matrix_.sorted_values(best);
    const auto order = matrix_.order(best);
    for (std::size_t k = 0; k < values.size(); ++k) {
      const auto i = order[k];
      const int h = stump.predict(values[k]);
      weights_[i] *= std::exp(-pick.alpha * labels_[i] * h);
    }
    normalize();
    return pick;
  }

 private:
  void normalize() {
    const double sum = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    if (!(sum > 0.0)) fail(ErrorCode::kDegenerate, "all weights are zero");
    for (double& w : weights_) w /= sum;
  }

  const SortedFeatureMatrix& matrix_;
  std::vector<std::int8_t> labels_;
  std::vector<double> weights_;
  unsigned threads_;
  bool halted_ = false;
};

/// Predictions of a stump learned on row `feature` for every sample.
inline std::vector<int> stump_predictions(const SortedFeatureMatrix& m, const WeakLearner& w) {
  std::vector<int> out(m.samples());
  const auto values = m.sorted_values(w.feature);
  const auto order = m.order(w.feature);
  for (std::size_t k = 0; k < values.size(); ++k) out[order[k]] = w.stump.predict(values[k]);
  return out;
}

}  // namespace facescan::classifier
