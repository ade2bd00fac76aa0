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

// Attentional cascade training. Each stage boosts stumps until it keeps
// d_min of a held-out positive split while passing at most f_max of the
// current negatives; between stages the negatives are re-bootstrapped from
// background windows the cascade still accepts.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "facescan/classifier/boost.hpp"
#include "facescan/classifier/cascade.hpp"
#include "facescan/classifier/features.hpp"
#include "facescan/classifier/icons.hpp"
#include "facescan/imaging.hpp"
#include "facescan/rng.hpp"

namespace facescan::classifier {

struct CascadeTargets {
  double d_min = 0.995;     // per-stage detection rate on held-out positives
  double f_max = 0.5;       // per-stage false-positive rate
  double f_target = 1e-6;   // cumulative false-positive rate
};

struct TrainingConfig {
  FeatureFamily family = FeatureFamily::kHaar;
  std::size_t feature_pool_size = 20000;
  std::uint64_t seed = 1;
  CascadeTargets targets;
  int max_stages = 10;
  int max_weak_per_stage = 120;
  std::size_t negatives_per_stage = 10000;
  std::size_t min_negatives = 20;  // fewer bootstrapped negatives means the pool is exhausted
  double holdout_fraction = 0.2;
  std::uint64_t max_bootstrap_draws = 40'000'000;
  double bootstrap_scale_factor = 1.25;
  int bootstrap_max_window = 96;
  double low_variance_threshold = 4.0;  // windows below this stddev are never scanned
  unsigned threads = 1;
};

struct StageReport {
  int weak_count = 0;
  double holdout_detection = 0.0;
  double false_positive = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t hard_negatives = 0;
};

struct TrainingReport {
  std::vector<StageReport> stages;
  double cumulative_fpr = 1.0;  // accept rate of the final cascade on bootstrap draws
  std::uint64_t final_draws = 0;
  std::string stop_reason;
};

/// Random base-window crops of the backgrounds, deterministic in `seed`.
/// Crop sizes range from the base window up to `max_scale` times it.
inline std::vector<Sample> sample_negatives(const std::vector<GrayImage>& backgrounds, std::size_t count,
                                            std::uint64_t seed, int base_window = kBaseWindow,
                                            double max_scale = 3.0) {
  if (backgrounds.empty()) fail(ErrorCode::kInvalidArgument, "no background images");
  for (const auto& b : backgrounds)
    if (b.width() < base_window || b.height() < base_window)
      fail(ErrorCode::kInvalidArgument, "background smaller than the base window");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& img = backgrounds[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(backgrounds.size()) - 1))];
    const int limit = std::min({img.width(), img.height(), static_cast<int>(base_window * max_scale)});
    const int size = static_cast<int>(rng.uniform_int(base_window, limit));
    const int x = static_cast<int>(rng.uniform_int(0, img.width() - size));
    const int y = static_cast<int>(rng.uniform_int(0, img.height() - size));
    out.push_back({resample_area(img, x, y, size, size, base_window, base_window), -1,
                   1.0 / static_cast<double>(count)});
  }
  return out;
}

/// Plain AdaBoost over base-window samples and a feature pool.
inline std::vector<WeakClassifier> adaboost(const std::vector<Sample>& samples,
                                            const std::vector<Feature>& pool, int rounds,
                                            unsigned threads = 1) {
  if (pool.empty()) fail(ErrorCode::kInvalidArgument, "empty feature pool");
  std::vector<PreparedPatch> patches;
  std::vector<std::int8_t> labels;
  std::vector<double> weights;
  for (const auto& s : samples) {
    patches.push_back(prepare_patch(s.window));
    labels.push_back(static_cast<std::int8_t>(s.label));
    weights.push_back(s.weight);
  }
  const SortedFeatureMatrix matrix(
      pool.size(), samples.size(),
      [&](std::size_t f, std::span<float> out) {
        for (std::size_t i = 0; i < patches.size(); ++i)
          out[i] = static_cast<float>(feature_value(pool[f], patches[i].ii, patches[i].inv_stddev));
      },
      threads);
  AdaBoost boost(matrix, labels, weights, threads);
  std::vector<WeakClassifier> out;
  for (int r = 0; r < rounds; ++r) {
    const auto w = boost.step();
    if (!w) break;
    out.push_back({pool[w->feature], w->stump.threshold, w->stump.polarity, w->alpha});
    if (boost.halted()) break;
  }
  return out;
}

namespace detail {

// A feature pre-resolved at scale 1 for fast matrix filling.
struct BaseFeature {
  ScaledHaar haar;
  ScaledBBF bbf;
  bool is_bbf = false;

  double value(const PreparedPatch& p) const {
    return is_bbf ? static_cast<double>(eval_scaled_bbf(p.ii, bbf, 0, 0))
                  : eval_scaled_haar(p.ii, haar, 0, 0, p.inv_stddev);
  }
};

inline BaseFeature resolve(const Feature& f) {
  BaseFeature b;
  if (const auto* h = std::get_if<HaarFeature>(&f)) {
    b.haar = scale_haar(*h, 1.0);
  } else {
    b.is_bbf = true;
    b.bbf = scale_bbf(std::get<BBFFeature>(f), 1.0);
  }
  return b;
}

inline bool accepts_patch(const Cascade& c, const PreparedPatch& p) {
  for (const auto& s : c.stages)
    if (stage_sum(s, p.ii, p.inv_stddev) < s.threshold) return false;
  return true;
}

}  // namespace detail

/// Background pool with integral images, scanned by random windows on the
/// detector's scale ladder.
class NegativePool {
 public:
  NegativePool(std::vector<GrayImage> images, const TrainingConfig& cfg, int base_window)
      : images_(std::move(images)), base_window_(base_window), cfg_(cfg) {
    if (images_.empty()) fail(ErrorCode::kInvalidArgument, "empty negative pool");
    int min_dim = INT32_MAX;
    for (const auto& img : images_) {
      if (img.width() < base_window || img.height() < base_window)
        fail(ErrorCode::kInvalidArgument, "background smaller than the base window");
      integrals_.emplace_back(img);
      min_dim = std::min({min_dim, img.width(), img.height()});
    }
    for (double s = 1.0;; s *= cfg.bootstrap_scale_factor) {
      const int win = scaled_window(base_window, s);
      if (win > min_dim || win > std::max(cfg.bootstrap_max_window, base_window)) break;
      scales_.push_back(s);
    }
  }

  struct Draw {
    std::vector<Sample> negatives;
    std::uint64_t draws = 0;
  };

  /// Draws random windows until `want` are accepted by `cascade` or the
  /// budget runs out.
  Draw bootstrap(const Cascade& cascade, std::size_t want, Rng& rng) const {
    std::vector<ScaledCascade> scaled;
    for (double s : scales_) scaled.emplace_back(cascade, s);
    Draw d;
    while (d.negatives.size() < want && d.draws < cfg_.max_bootstrap_draws) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(images_.size()) - 1));
      const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(scales_.size()) - 1));
      const auto& img = images_[i];
      const int win = scaled[k].window();
      const int x = static_cast<int>(rng.uniform_int(0, img.width() - win));
      const int y = static_cast<int>(rng.uniform_int(0, img.height() - win));
      const auto stats = window_stats(integrals_[i], {x, y, win, win});
      if (stats.raw_stddev < cfg_.low_variance_threshold) continue;
      ++d.draws;
      if (!scaled[k].classify(integrals_[i], x, y, stats.inv_stddev()).accepted) continue;
      d.negatives.push_back({resample_area(img, x, y, win, win, base_window_, base_window_), -1, 1.0});
    }
    return d;
  }

 private:
  std::vector<GrayImage> images_;
  std::vector<IntegralImage> integrals_;
  std::vector<double> scales_;
  int base_window_;
  TrainingConfig cfg_;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains a cascade. `extra_negatives` are base-window patches (e.g. voted-down
/// candidates) placed in every stage's negative set while the cascade still
/// accepts them.
inline Cascade train_cascade(const std::vector<Sample>& positives,
                             const std::vector<GrayImage>& negative_pool, const TrainingConfig& cfg,
                             const std::vector<GrayImage>& extra_negatives = {},
                             TrainingReport* report = nullptr, const ProgressFn& progress = {}) {
  const int base = positives.empty() ? kBaseWindow : positives.front().window.width();
  if (positives.size() < 10) fail(ErrorCode::kInvalidArgument, "too few positives");
  if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0))
    fail(ErrorCode::kInvalidArgument, "holdout fraction must be in (0, 1)");
  const auto& t = cfg.targets;
  if (!(t.d_min > 0.0 && t.d_min <= 1.0 && t.f_max > 0.0 && t.f_max < 1.0 && t.f_target > 0.0))
    fail(ErrorCode::kInvalidArgument, "cascade targets out of range");

  const auto log = [&](const std::string& m) {
    if (progress) progress(m);
  };

  Rng rng(cfg.seed);
  const auto pool = feature_pool(cfg.family, cfg.feature_pool_size, hash_combine(cfg.seed, 17), base);
  std::vector<detail::BaseFeature> resolved;
  resolved.reserve(pool.size());
  for (const auto& f : pool) resolved.push_back(detail::resolve(f));

  // Held-out split for stage-threshold calibration.
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const auto n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.holdout_fraction * static_cast<double>(positives.size()))));
  std::vector<PreparedPatch> train_pos, hold_pos;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& w = positives[order[k]].window;
    if (w.width() != base || w.height() != base) fail(ErrorCode::kInvalidArgument, "positives must be base-window patches");
    (k < n_hold ? hold_pos : train_pos).push_back(prepare_patch(w));
  }
  std::vector<PreparedPatch> extra;
  for (const auto& g : extra_negatives) {
    if (g.width() != base || g.height() != base) fail(ErrorCode::kInvalidArgument, "extra negatives must be base-window patches");
    extra.push_back(prepare_patch(g));
  }

  const NegativePool negatives(negative_pool, cfg, base);

  Cascade cascade;
  cascade.base_window = base;
  cascade.family = cfg.family;
  cascade.seed = cfg.seed;
  TrainingReport rep;

  for (int stage_index = 0; stage_index < cfg.max_stages; ++stage_index) {
    // Positives and hard extras the cascade still accepts.
    std::vector<const PreparedPatch*> pos, hold, hard;
    for (const auto& p : train_pos)
      if (detail::accepts_patch(cascade, p)) pos.push_back(&p);
    for (const auto& p : hold_pos)
      if (detail::accepts_patch(cascade, p)) hold.push_back(&p);
    for (const auto& p : extra)
      if (detail::accepts_patch(cascade, p)) hard.push_back(&p);

    const std::size_t want = cfg.negatives_per_stage > hard.size() ? cfg.negatives_per_stage - hard.size() : 0;
    auto draw = negatives.bootstrap(cascade, want, rng);
    rep.final_draws = draw.draws;
    rep.cumulative_fpr = draw.draws ? static_cast<double>(draw.negatives.size()) / static_cast<double>(draw.draws) : 0.0;
    log("stage " + std::to_string(stage_index) + ": bootstrapped " + std::to_string(draw.negatives.size()) +
        " negatives from " + std::to_string(draw.draws) + " draws (fpr " + format_double(rep.cumulative_fpr) + ")");
    if (!cascade.stages.empty() && rep.cumulative_fpr <= t.f_target) {
      rep.stop_reason = "reached target false-positive rate";
      break;
    }
    if (draw.negatives.size() + hard.size() < cfg.min_negatives) {
      rep.stop_reason = "negative pool exhausted";
      break;
    }
    if (pos.size() < 2 || hold.empty()) {
      rep.stop_reason = "positives exhausted";
      break;
    }

    std::vector<PreparedPatch> neg_patches;
    neg_patches.reserve(draw.negatives.size());
    for (const auto& s : draw.negatives) neg_patches.push_back(prepare_patch(s.window));
    std::vector<const PreparedPatch*> all;
    std::vector<std::int8_t> labels;
    for (const auto* p : pos) {
      all.push_back(p);
      labels.push_back(1);
    }
    for (const auto* p : hard) {
      all.push_back(p);
      labels.push_back(-1);
    }
    for (const auto& p : neg_patches) {
      all.push_back(&p);
      labels.push_back(-1);
    }
    const std::size_t n_neg = all.size() - pos.size();

    const SortedFeatureMatrix matrix(
        resolved.size(), all.size(),
        [&](std::size_t f, std::span<float> out) {
          for (std::size_t i = 0; i < all.size(); ++i) out[i] = static_cast<float>(resolved[f].value(*all[i]));
        },
        cfg.threads);
    AdaBoost boost(matrix, labels, AdaBoost::balanced_weights(labels), cfg.threads);

    CascadeStage stage;
    std::vector<double> hold_sum(hold.size(), 0.0), neg_sum(n_neg, 0.0);
    StageReport sr;
    sr.positives = pos.size();
    sr.negatives = n_neg;
    sr.hard_negatives = hard.size();
    while (static_cast<int>(stage.weak.size()) < cfg.max_weak_per_stage) {
      const auto pick = boost.step();
      if (!pick) break;
      const WeakClassifier wc{pool[pick->feature], pick->stump.threshold, pick->stump.polarity, pick->alpha};
      stage.weak.push_back(wc);
      for (std::size_t i = 0; i < hold.size(); ++i) {
        const double v = resolved[pick->feature].value(*hold[i]);
        hold_sum[i] += wc.polarity * (v - wc.threshold) > 0.0 ? wc.alpha : -wc.alpha;
      }
      const auto pred = stump_predictions(matrix, *pick);
      for (std::size_t i = 0; i < n_neg; ++i) neg_sum[i] += pred[pos.size() + i] * wc.alpha;

      // Largest threshold keeping at least d_min of the held-out positives.
      std::vector<double> sorted = hold_sum;
      std::sort(sorted.begin(), sorted.end());
      const auto misses = static_cast<std::size_t>(std::floor((1.0 - t.d_min) * static_cast<double>(sorted.size()) + 1e-9));
      stage.threshold = sorted[std::min(misses, sorted.size() - 1)] - 1e-9;
      std::size_t kept = 0, passed = 0;
      for (double s : hold_sum) kept += s >= stage.threshold ? 1 : 0;
      for (double s : neg_sum) passed += s >= stage.threshold ? 1 : 0;
      sr.holdout_detection = static_cast<double>(kept) / static_cast<double>(hold_sum.size());
      sr.false_positive = static_cast<double>(passed) / static_cast<double>(n_neg);
      if (sr.false_positive <= t.f_max || boost.halted()) break;
    }
    if (stage.weak.empty()) {
      rep.stop_reason = "no weak classifier better than chance";
      break;
    }
    sr.weak_count = static_cast<int>(stage.weak.size());
    log("stage " + std::to_string(stage_index) + ": " + std::to_string(sr.weak_count) + " weak, holdout det " +
        format_double(sr.holdout_detection) + ", stage fp " + format_double(sr.false_positive));
    cascade.stages.push_back(std::move(stage));
    rep.stages.push_back(sr);
  }
  if (rep.stop_reason.empty()) {
    rep.stop_reason = "stage limit reached";
    const auto final_draw = negatives.bootstrap(cascade, cfg.negatives_per_stage, rng);
    rep.final_draws = final_draw.draws;
    rep.cumulative_fpr = final_draw.draws ? static_cast<double>(final_draw.negatives.size()) /
                                                static_cast<double>(final_draw.draws)
                                          : 0.0;
  }
  if (cascade.stages.empty()) fail(ErrorCode::kDegenerate, "training produced no stages: " + rep.stop_reason);

  cascade.metadata = {
      {"positives", std::to_string(positives.size())},
      {"negatives_per_stage", std::to_string(cfg.negatives_per_stage)},
      {"extra_negatives", std::to_string(extra_negatives.size())},
      {"feature_pool", std::to_string(pool.size())},
      {"stop_reason", rep.stop_reason},
  };
  if (report) *report = rep;
  return cascade;
}

}  // namespace facescan::classifier
