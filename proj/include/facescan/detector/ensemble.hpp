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

// Several cascades over the same image, fused by distinct-detector consensus.

#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "facescan/detector/group.hpp"
#include "facescan/detector/scan.hpp"

namespace facescan::detector {

struct NamedCascade {
  std::string id;
  classifier::Cascade cascade;
};

struct EnsembleResult {
  std::vector<CandidateGroup> groups;       // consensus order
  std::map<std::string, ScanStats> stats;   // per detector id (merged if repeated)
  std::vector<Detection> detections;        // raw, per-detector canonical order
};

/// Scans `ii` with every cascade and groups the union of detections.
inline EnsembleResult ensemble_scan_integral(const IntegralImage& ii, const std::vector<NamedCascade>& detectors,
                                             const ScanParams& scan, const GroupParams& group = {},
                                             std::int64_t offset_x = 0, std::int64_t offset_y = 0) {
  if (detectors.empty()) fail(ErrorCode::kInvalidArgument, "ensemble needs at least one cascade");
  EnsembleResult out;
  for (const auto& d : detectors) {
    auto r = scan_integral(ii, d.cascade, scan, d.id, offset_x, offset_y);
    out.stats[d.id].merge(r.stats);
    out.detections.insert(out.detections.end(), r.detections.begin(), r.detections.end());
  }
  out.groups = group_detections(out.detections, group);
  std::sort(out.groups.begin(), out.groups.end(), consensus_order);
  return out;
}

inline std::vector<CandidateGroup> ensemble_scan(const GrayImage& gray, const std::vector<NamedCascade>& detectors,
                                                 const ScanParams& scan, const GroupParams& group = {}) {
  if (detectors.empty()) fail(ErrorCode::kInvalidArgument, "ensemble needs at least one cascade");
  return ensemble_scan_integral(IntegralImage(gray), detectors, scan, group).groups;
}

}  // namespace facescan::detector
