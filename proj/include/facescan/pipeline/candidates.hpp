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

// Georeferenced candidate records and their canonical JSON-lines form.

#pragma once

#include <openssl/evp.h>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "facescan/common.hpp"
#include "facescan/detector/group.hpp"
#include "facescan/geo.hpp"

namespace facescan::pipeline {

using ordered_json = nlohmann::ordered_json;

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::kIo, "sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

/// Content hash over what identifies a detection: where it is, not how it
/// was found. Stable across re-scans with identical output.
inline std::string candidate_id(geo::BodyName body, const std::string& layer, int zoom, const detector::BBox& b) {
  std::string key = std::string(geo::to_string(body)) + "|" + layer + "|" + std::to_string(zoom);
  for (double v : {b.x, b.y, b.w, b.h}) key += "|" + format_double(v);
  return sha256_hex(key).substr(0, 24);
}

struct CandidateRecord {
  std::string candidate_id;
  std::string job_id;
  geo::BodyName body = geo::BodyName::kMoon;
  std::string layer;
  int zoom = 0;
  geo::LonLat lonlat;  // bbox center
  detector::BBox bbox;
  int consensus = 0;
  std::vector<std::string> detector_ids;
  int neighbor_count = 0;
  std::map<std::string, double> scores;

  double max_score() const {
    double m = 0.0;
    bool first = true;
    for (const auto& [id, s] : scores) {
      if (first || s > m) m = s;
      first = false;
    }
    return m;
  }

  friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

/// Canonical order: consensus desc, max score desc, then position and id.
inline bool canonical_order(const CandidateRecord& a, const CandidateRecord& b) {
  if (a.consensus != b.consensus) return a.consensus > b.consensus;
  if (a.max_score() != b.max_score()) return a.max_score() > b.max_score();
  return std::tie(a.body, a.layer, a.bbox.y, a.bbox.x, a.bbox.h, a.candidate_id) <
         std::tie(b.body, b.layer, b.bbox.y, b.bbox.x, b.bbox.h, b.candidate_id);
}

inline ordered_json to_json(const CandidateRecord& c) {
  ordered_json scores = ordered_json::object();
  for (const auto& [id, s] : c.scores) scores[id] = s;
  return ordered_json{{"candidate_id", c.candidate_id},
                      {"body", geo::to_string(c.body)},
                      {"layer", c.layer},
                      {"lonlat", {c.lonlat.lon_deg, c.lonlat.lat_deg}},
                      {"zoom", c.zoom},
                      {"bbox_px", {c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h}},
                      {"consensus", c.consensus},
                      {"detector_ids", c.detector_ids},
                      {"neighbor_count", c.neighbor_count},
                      {"scores", scores},
                      {"job_id", c.job_id}};
}

inline CandidateRecord candidate_from_json(const nlohmann::json& j) {
  try {
    CandidateRecord c;
    c.candidate_id = j.at("candidate_id").get<std::string>();
    c.body = geo::body_from_string(j.at("body").get<std::string>()).name;
    c.layer = j.at("layer").get<std::string>();
    c.lonlat = {j.at("lonlat").at(0).get<double>(), j.at("lonlat").at(1).get<double>()};
    c.zoom = j.at("zoom").get<int>();
    const auto& b = j.at("bbox_px");
    c.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    c.consensus = j.at("consensus").get<int>();
    c.detector_ids = j.at("detector_ids").get<std::vector<std::string>>();
    c.neighbor_count = j.at("neighbor_count").get<int>();
    for (const auto& [id, s] : j.at("scores").items()) c.scores[id] = s.get<double>();
    c.job_id = j.at("job_id").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("candidate record: ") + e.what());
  }
}

inline std::string to_jsonl(const std::vector<CandidateRecord>& cands) {
  std::string out;
  for (const auto& c : cands) {
    out += to_json(c).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<CandidateRecord> parse_jsonl(std::string_view text) {
  std::vector<CandidateRecord> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kParse, "candidates line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(candidate_from_json(j));
  }
  return out;
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::kIo, "short write to " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace facescan::pipeline
