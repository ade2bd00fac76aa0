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

// Detection grouping: IoU connected components with box averaging.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "facescan/detector/scan.hpp"

namespace facescan::detector {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  // The smaller index becomes the root, so roots are component minima.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

/// Connected components of `boxes` under IoU >= iou_min. Each component is
/// a sorted index list; components are ordered by their smallest index.
inline std::vector<std::vector<std::size_t>> box_components(const std::vector<BBox>& boxes, double iou_min) {
  const std::size_t n = boxes.size();
  UnionFind uf(n);
  // Sweep over x: only boxes whose x-extents overlap can reach iou_min > 0.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return boxes[a].x < boxes[b].x; });
  for (std::size_t i = 0; i < n; ++i) {
    const BBox& a = boxes[order[i]];
    for (std::size_t j = i + 1; j < n; ++j) {
      const BBox& b = boxes[order[j]];
      if (iou_min > 0.0 && b.x >= a.x + a.w) break;
      if (iou(a, b) >= iou_min) uf.unite(order[i], order[j]);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < n; ++i) by_root[uf.find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(by_root.size());
  for (auto& [root, members] : by_root) out.push_back(std::move(members));
  return out;
}

struct GroupParams {
  double iou_min = 0.3;
  int min_neighbors = 2;
};

struct CandidateGroup {
  BBox bbox;  // average of member boxes
  int neighbor_count = 0;
  std::map<std::string, double> best_score;  // keyed by detector id

  int consensus() const { return static_cast<int>(best_score.size()); }

  double max_score() const {
    double m = 0.0;
    bool first = true;
    for (const auto& [id, s] : best_score) {
      if (first || s > m) m = s;
      first = false;
    }
    return m;
  }

  std::vector<std::string> detector_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, s] : best_score) ids.push_back(id);
    return ids;
  }
};

namespace detail {

// Merges groups by averaging member boxes (weighted by neighbor count).
inline CandidateGroup merge_groups(const std::vector<CandidateGroup>& groups, const std::vector<std::size_t>& idx) {
  CandidateGroup g;
  double sx = 0, sy = 0, sw = 0, sh = 0;
  for (std::size_t i : idx) {
    const auto& m = groups[i];
    const double n = m.neighbor_count;
    sx += m.bbox.x * n;
    sy += m.bbox.y * n;
    sw += m.bbox.w * n;
    sh += m.bbox.h * n;
    g.neighbor_count += m.neighbor_count;
    for (const auto& [id, s] : m.best_score) {
      auto [it, inserted] = g.best_score.emplace(id, s);
      if (!inserted) it->second = std::max(it->second, s);
    }
  }
  const double n = g.neighbor_count;
  g.bbox = {sx / n, sy / n, sw / n, sh / n};
  return g;
}

// Merges overlapping groups until no two groups reach iou_min.
inline std::vector<CandidateGroup> merge_to_fixpoint(std::vector<CandidateGroup> groups, double iou_min) {
  for (;;) {
    std::vector<BBox> boxes;
    boxes.reserve(groups.size());
    for (const auto& g : groups) boxes.push_back(g.bbox);
    const auto comps = box_components(boxes, iou_min);
    if (comps.size() == groups.size()) return groups;
    std::vector<CandidateGroup> next;
    next.reserve(comps.size());
    for (const auto& c : comps) next.push_back(merge_groups(groups, c));
    groups = std::move(next);
  }
}

}  // namespace detail

inline bool position_order(const CandidateGroup& a, const CandidateGroup& b) {
  return std::tie(a.bbox.y, a.bbox.x, a.bbox.h, a.bbox.w, a.neighbor_count) <
         std::tie(b.bbox.y, b.bbox.x, b.bbox.h, b.bbox.w, b.neighbor_count);
}

/// Groups per detector id, then merges across detectors, repeating until no
/// two groups overlap at iou_min (which makes grouping idempotent). Groups
/// below min_neighbors are dropped; output is ordered by (y, x).
inline std::vector<CandidateGroup> group_detections(const std::vector<Detection>& dets, const GroupParams& p = {}) {
  std::map<std::string, std::vector<std::size_t>> by_detector;
  for (std::size_t i = 0; i < dets.size(); ++i) by_detector[dets[i].detector_id].push_back(i);

  std::vector<CandidateGroup> groups;
  for (const auto& [id, idx] : by_detector) {
    std::vector<CandidateGroup> singles;
    singles.reserve(idx.size());
    for (std::size_t i : idx) {
      CandidateGroup g;
      g.bbox = dets[i].bbox;
      g.neighbor_count = 1;
      g.best_score[id] = dets[i].score;
      singles.push_back(std::move(g));
    }
    std::vector<BBox> boxes;
    for (const auto& g : singles) boxes.push_back(g.bbox);
    for (const auto& c : box_components(boxes, p.iou_min)) groups.push_back(detail::merge_groups(singles, c));
  }
  groups = detail::merge_to_fixpoint(std::move(groups), p.iou_min);

  std::erase_if(groups, [&](const CandidateGroup& g) { return g.neighbor_count < p.min_neighbors; });
  std::sort(groups.begin(), groups.end(), position_order);
  return groups;
}

/// Ranking order for fused output: consensus desc, then max score desc.
inline bool consensus_order(const CandidateGroup& a, const CandidateGroup& b) {
  if (a.consensus() != b.consensus()) return a.consensus() > b.consensus();
  if (a.max_score() != b.max_score()) return a.max_score() > b.max_score();
  return position_order(a, b);
}

}  // namespace facescan::detector
