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

// File-backed candidate store for human review.
//
//   DIR/candidates.jsonl   snapshot, rewritten atomically on ingest
//   DIR/votes.log          append-only vote records (JSON lines)
//   DIR/thumbnails/ID.png  crop around the box with a 50% margin per side
//
// Tallies are never stored: they are rebuilt from the vote log on open.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "facescan/common.hpp"
#include "facescan/imaging.hpp"
#include "facescan/pipeline/candidates.hpp"
#include "facescan/tiles/codec.hpp"
#include "facescan/tiles/fetcher.hpp"

namespace facescan::service {

using pipeline::CandidateRecord;
using pipeline::ordered_json;

enum class Verdict { kFace, kNotFace };

inline std::string_view to_string(Verdict v) { return v == Verdict::kFace ? "face" : "not_face"; }

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "face") return Verdict::kFace;
  if (s == "not_face") return Verdict::kNotFace;
  fail(ErrorCode::kInvalidArgument, "verdict must be face or not_face");
}

struct Vote {
  std::string candidate_id;
  Verdict verdict = Verdict::kFace;
  std::string voter_token;
  std::int64_t voted_at = 0;  // unix seconds
};

inline ordered_json to_json(const Vote& v) {
  return ordered_json{{"candidate_id", v.candidate_id},
                      {"verdict", to_string(v.verdict)},
                      {"voter_token", v.voter_token},
                      {"voted_at", v.voted_at}};
}

inline Vote vote_from_json(const nlohmann::json& j) {
  try {
    return Vote{j.at("candidate_id").get<std::string>(), verdict_from_string(j.at("verdict").get<std::string>()),
                j.at("voter_token").get<std::string>(), j.at("voted_at").get<std::int64_t>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("vote record: ") + e.what());
  }
}

/// Lower bound of the Wilson score interval for `positive` of `n`.
/// Zero votes give 0.
inline double wilson_lower_bound(std::int64_t positive, std::int64_t n, double z = 1.96) {
  if (n <= 0) return 0.0;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(positive) / nn;
  const double z2 = z * z;
  const double center = p + z2 / (2.0 * nn);
  const double spread = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return std::clamp((center - spread) / (1.0 + z2 / nn), 0.0, 1.0);
}

struct Tally {
  std::string candidate_id;
  std::int64_t face_votes = 0;
  std::int64_t not_face_votes = 0;
  double wilson_lower_bound = 0.0;

  std::int64_t total() const { return face_votes + not_face_votes; }
  friend bool operator==(const Tally&, const Tally&) = default;
};

inline ordered_json to_json(const Tally& t) {
  return ordered_json{{"candidate_id", t.candidate_id},
                      {"face_votes", t.face_votes},
                      {"not_face_votes", t.not_face_votes},
                      {"wilson_lower_bound", t.wilson_lower_bound}};
}

/// Current votes keyed by (candidate, voter); later records replace earlier.
using VoteTable = std::map<std::pair<std::string, std::string>, Vote>;

inline std::map<std::string, Tally> tallies_from_votes(const VoteTable& votes) {
  std::map<std::string, Tally> out;
  for (const auto& [key, v] : votes) {
    auto& t = out[v.candidate_id];
    t.candidate_id = v.candidate_id;
    ++(v.verdict == Verdict::kFace ? t.face_votes : t.not_face_votes);
  }
  for (auto& [id, t] : out) t.wilson_lower_bound = wilson_lower_bound(t.face_votes, t.total());
  return out;
}

/// Replays a vote log. A torn final line (crash mid-append) is ignored;
/// damage anywhere else is an error.
inline VoteTable replay_votes(std::string_view log) {
  VoteTable table;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < log.size()) {
    const auto nl = log.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    const auto line = log.substr(pos, last ? std::string_view::npos : nl - pos);
    pos = last ? log.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (last) break;
      fail(ErrorCode::kParse, "votes.log line " + std::to_string(line_no) + " is not JSON");
    }
    Vote v = vote_from_json(j);
    table[{v.candidate_id, v.voter_token}] = std::move(v);
  }
  return table;
}

/// Where a thumbnail sits in global mosaic pixels.
struct Thumbnail {
  std::string file;  // relative to the store directory
  geo::PixelRect rect;
};

struct StoredCandidate {
  CandidateRecord record;
  std::int64_t created_at = 0;  // unix seconds at first ingest
  std::int64_t seq = 0;         // ingest order
  Thumbnail thumbnail;
};

/// Thumbnail rect: the box grown by half its size on every side, snapped
/// outward to whole pixels.
inline geo::PixelRect thumbnail_rect(const detector::BBox& b) {
  const auto x0 = static_cast<std::int64_t>(std::floor(b.x - 0.5 * b.w));
  const auto y0 = static_cast<std::int64_t>(std::floor(b.y - 0.5 * b.h));
  const auto x1 = static_cast<std::int64_t>(std::ceil(b.x + 1.5 * b.w));
  const auto y1 = static_cast<std::int64_t>(std::ceil(b.y + 1.5 * b.h));
  return {x0, y0, x1 - x0, y1 - y0};
}

/// Supplies the pixels of a global rect for a candidate's body/layer/zoom.
/// Returns the image and the rect it actually covers (clamped to the mosaic).
using ThumbnailSource = std::function<std::pair<GrayImage, geo::PixelRect>(const CandidateRecord&, const geo::PixelRect&)>;

/// Thumbnail source over tile fetchers keyed by (body, layer).
inline ThumbnailSource fetcher_thumbnails(
    std::map<std::pair<geo::BodyName, std::string>, std::shared_ptr<tiles::TileFetcher>> fetchers) {
  return [fetchers = std::move(fetchers)](const CandidateRecord& c, const geo::PixelRect& r) {
    const auto it = fetchers.find({c.body, c.layer});
    if (it == fetchers.end())
      fail(ErrorCode::kNotFound, "no tile source for " + std::string(geo::to_string(c.body)) + "/" + c.layer);
    auto region = tiles::assemble_pixels(*it->second, c.zoom, r);
    return std::make_pair(std::move(region.image), region.rect);
  };
}

enum class SortKey { kConsensus, kVotes, kNewest };

inline SortKey sort_key_from_string(std::string_view s) {
  if (s.empty() || s == "consensus") return SortKey::kConsensus;
  if (s == "votes") return SortKey::kVotes;
  if (s == "newest") return SortKey::kNewest;
  fail(ErrorCode::kInvalidArgument, "sort must be consensus, votes or newest");
}

struct ListQuery {
  std::optional<geo::BodyName> body;
  std::optional<std::string> layer;
  int min_consensus = 0;
  SortKey sort = SortKey::kConsensus;
  int page = 1;  // 1-based
  int page_size = 50;

  void validate() const {
    if (page < 1) fail(ErrorCode::kInvalidArgument, "page must be >= 1");
    if (page_size < 1 || page_size > 500) fail(ErrorCode::kInvalidArgument, "page_size must be in [1, 500]");
  }
};

struct ListItem {
  StoredCandidate candidate;
  Tally tally;
};

struct Page {
  std::vector<ListItem> items;
  std::int64_t total = 0;  // size of the filtered set
  int page = 1;
  int page_size = 50;
};

struct ExportOptions {
  std::int64_t min_not_face = 3;
  std::int64_t max_face = 0;
  int base_window = 24;
  // Extra patches per candidate at small shifts and scales around the box,
  // so one voted-down look-alike teaches more than its exact framing.
  bool jitter = true;
};

struct ExportedPatch {
  std::string file;
  std::string candidate_id;
  std::int64_t face_votes = 0;
  std::int64_t not_face_votes = 0;
  GrayImage pixels;
};

struct HardNegativeExport {
  ExportOptions options;
  std::vector<ExportedPatch> patches;  // ordered by candidate id, then variant
  std::int64_t candidates = 0;
};

inline ordered_json manifest_json(const HardNegativeExport& e) {
  ordered_json patches = ordered_json::array();
  for (const auto& p : e.patches)
    patches.push_back({{"file", p.file},
                       {"candidate_id", p.candidate_id},
                       {"face_votes", p.face_votes},
                       {"not_face_votes", p.not_face_votes}});
  return ordered_json{{"format", "facescan-negatives-v1"},
                      {"base_window", e.options.base_window},
                      {"min_not_face", e.options.min_not_face},
                      {"max_face", e.options.max_face},
                      {"jitter", e.options.jitter},
                      {"candidates", e.candidates},
                      {"patches", patches}};
}

/// Writes PNG patches plus manifest.json into `dir`; `facescan train
/// --extra-negatives DIR` reads exactly this layout.
inline void write_export(const HardNegativeExport& e, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& p : e.patches) tiles::write_png_file(p.pixels, (dir / p.file).string());
  pipeline::write_text_file((dir / "manifest.json").string(), manifest_json(e).dump(2) + "\n");
}

/// Reads the patches listed in an export directory's manifest.
inline std::vector<GrayImage> read_export(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(pipeline::read_text_file((dir / "manifest.json").string()), nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "facescan-negatives-v1")
    fail(ErrorCode::kParse, "not a negatives export: " + dir.string());
  std::vector<GrayImage> out;
  for (const auto& p : manifest.at("patches")) out.push_back(tiles::read_image_file((dir / p.at("file").get<std::string>()).string()));
  return out;
}

struct StoreStats {
  std::int64_t candidates = 0;
  std::int64_t votes = 0;
  std::int64_t voters = 0;
  std::int64_t candidates_with_votes = 0;
  std::map<std::string, std::int64_t> by_body;
  std::map<int, std::int64_t> by_consensus;
};

inline ordered_json to_json(const StoreStats& s) {
  ordered_json by_consensus = ordered_json::object();
  for (const auto& [k, n] : s.by_consensus) by_consensus[std::to_string(k)] = n;
  return ordered_json{{"candidates", s.candidates},
                      {"votes", s.votes},
                      {"voters", s.voters},
                      {"candidates_with_votes", s.candidates_with_votes},
                      {"by_body", s.by_body},
                      {"by_consensus", by_consensus}};
}

inline std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Thread-safe: reads share a lock; ingest and votes go through one writer.
class Store {
 public:
  using Clock = std::function<std::int64_t()>;

  explicit Store(std::filesystem::path dir, Clock clock = unix_now) : dir_(std::move(dir)), clock_(std::move(clock)) {
    std::filesystem::create_directories(dir_ / "thumbnails");
    if (std::filesystem::exists(snapshot_path())) {
      const auto text = pipeline::read_text_file(snapshot_path().string());
      std::size_t pos = 0;
      while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) fail(ErrorCode::kParse, "corrupt candidates.jsonl");
        StoredCandidate s;
        s.record = pipeline::candidate_from_json(j);
        s.created_at = j.at("created_at").get<std::int64_t>();
        s.seq = j.at("seq").get<std::int64_t>();
        const auto& t = j.at("thumbnail");
        s.thumbnail.file = t.at("file").get<std::string>();
        s.thumbnail.rect = {t.at("x").get<std::int64_t>(), t.at("y").get<std::int64_t>(),
                            t.at("w").get<std::int64_t>(), t.at("h").get<std::int64_t>()};
        index_[s.record.candidate_id] = candidates_.size();
        candidates_.push_back(std::move(s));
      }
    }
    if (std::filesystem::exists(votes_path())) votes_ = replay_votes(pipeline::read_text_file(votes_path().string()));
    tallies_ = tallies_from_votes(votes_);
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path snapshot_path() const { return dir_ / "candidates.jsonl"; }
  std::filesystem::path votes_path() const { return dir_ / "votes.log"; }

  /// Adds candidates not yet present; returns how many were new. Each
  /// thumbnail is on disk before its candidate becomes listable.
  std::int64_t ingest(const std::vector<CandidateRecord>& records, const ThumbnailSource& thumbs) {
    std::unique_lock lock(mu_);
    std::vector<StoredCandidate> fresh;
    std::map<std::string, bool> seen;
    for (const auto& c : records) {
      if (index_.contains(c.candidate_id) || seen[c.candidate_id]) continue;
      seen[c.candidate_id] = true;
      StoredCandidate s;
      s.record = c;
      s.created_at = clock_();
      s.seq = static_cast<std::int64_t>(candidates_.size() + fresh.size());
      auto [img, rect] = thumbs(c, thumbnail_rect(c.bbox));
      s.thumbnail = {"thumbnails/" + c.candidate_id + ".png", rect};
      const auto final_path = dir_ / s.thumbnail.file;
      const auto tmp = final_path.string() + ".tmp";
      tiles::write_png_file(img, tmp);
      std::filesystem::rename(tmp, final_path);
      fresh.push_back(std::move(s));
    }
    if (fresh.empty()) return 0;
    std::vector<StoredCandidate> next = candidates_;
    next.insert(next.end(), fresh.begin(), fresh.end());
    write_snapshot(next);
    for (auto& s : fresh) {
      index_[s.record.candidate_id] = candidates_.size();
      candidates_.push_back(std::move(s));
    }
    return static_cast<std::int64_t>(fresh.size());
  }

  std::int64_t size() const {
    std::shared_lock lock(mu_);
    return static_cast<std::int64_t>(candidates_.size());
  }

  std::optional<ListItem> get(const std::string& id) const {
    std::shared_lock lock(mu_);
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return ListItem{candidates_[it->second], tally_locked(id)};
  }

  std::optional<Verdict> vote_of(const std::string& id, const std::string& voter) const {
    std::shared_lock lock(mu_);
    const auto it = votes_.find({id, voter});
    if (it == votes_.end()) return std::nullopt;
    return it->second.verdict;
  }

  std::filesystem::path thumbnail_path(const std::string& id) const {
    std::shared_lock lock(mu_);
    const auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::kNotFound, "unknown candidate " + id);
    return dir_ / candidates_[it->second].thumbnail.file;
  }

  Tally tally(const std::string& id) const {
    std::shared_lock lock(mu_);
    if (!index_.contains(id)) fail(ErrorCode::kNotFound, "unknown candidate " + id);
    return tally_locked(id);
  }

  /// Upserts the (candidate, voter) vote and returns the fresh tally. The
  /// log record is flushed before the in-memory state changes.
  Tally cast_vote(const std::string& id, Verdict verdict, const std::string& voter_token) {
    if (voter_token.empty() || voter_token.size() > 256) fail(ErrorCode::kInvalidArgument, "voter_token must be 1-256 chars");
    std::unique_lock lock(mu_);
    if (!index_.contains(id)) fail(ErrorCode::kNotFound, "unknown candidate " + id);
    Vote v{id, verdict, voter_token, clock_()};
    {
      std::ofstream log(votes_path(), std::ios::app | std::ios::binary);
      log << to_json(v).dump() << '\n';
      log.flush();
      if (!log) fail(ErrorCode::kIo, "cannot append to votes.log");
    }
    votes_[{id, voter_token}] = std::move(v);
    auto& t = tallies_[id];
    t = Tally{id, 0, 0, 0.0};
    for (auto it = votes_.lower_bound({id, std::string()}); it != votes_.end() && it->first.first == id; ++it)
      ++(it->second.verdict == Verdict::kFace ? t.face_votes : t.not_face_votes);
    t.wilson_lower_bound = wilson_lower_bound(t.face_votes, t.total());
    return t;
  }

  Page list(const ListQuery& q) const {
    q.validate();
    std::shared_lock lock(mu_);
    std::vector<ListItem> items;
    for (const auto& s : candidates_) {
      const auto& c = s.record;
      if (q.body && c.body != *q.body) continue;
      if (q.layer && c.layer != *q.layer) continue;
      if (c.consensus < q.min_consensus) continue;
      items.push_back({s, tally_locked(c.candidate_id)});
    }
    // Every ordering ends in the unique candidate id, so pages are stable.
    const auto by_id = [](const ListItem& a, const ListItem& b) {
      return a.candidate.record.candidate_id < b.candidate.record.candidate_id;
    };
    switch (q.sort) {
      case SortKey::kConsensus:
        std::sort(items.begin(), items.end(), [&](const ListItem& a, const ListItem& b) {
          const auto &ca = a.candidate.record, &cb = b.candidate.record;
          if (ca.consensus != cb.consensus) return ca.consensus > cb.consensus;
          if (ca.max_score() != cb.max_score()) return ca.max_score() > cb.max_score();
          return by_id(a, b);
        });
        break;
      case SortKey::kVotes:
        std::sort(items.begin(), items.end(), [&](const ListItem& a, const ListItem& b) {
          if (a.tally.wilson_lower_bound != b.tally.wilson_lower_bound)
            return a.tally.wilson_lower_bound > b.tally.wilson_lower_bound;
          if (a.tally.total() != b.tally.total()) return a.tally.total() > b.tally.total();
          return by_id(a, b);
        });
        break;
      case SortKey::kNewest:
        std::sort(items.begin(), items.end(), [&](const ListItem& a, const ListItem& b) {
          if (a.candidate.created_at != b.candidate.created_at) return a.candidate.created_at > b.candidate.created_at;
          if (a.candidate.seq != b.candidate.seq) return a.candidate.seq > b.candidate.seq;
          return by_id(a, b);
        });
        break;
    }
    Page page;
    page.total = static_cast<std::int64_t>(items.size());
    page.page = q.page;
    page.page_size = q.page_size;
    const auto begin = static_cast<std::int64_t>(q.page - 1) * q.page_size;
    for (std::int64_t i = begin; i < page.total && i < begin + q.page_size; ++i)
      page.items.push_back(std::move(items[static_cast<std::size_t>(i)]));
    return page;
  }

  /// Base-window grayscale patches of every candidate with at least
  /// min_not_face and at most max_face votes, cut from the stored thumbnails.
  HardNegativeExport export_hard_negatives(const ExportOptions& opts = {}) const {
    if (opts.base_window < 8) fail(ErrorCode::kInvalidArgument, "base_window too small");
    if (opts.min_not_face < 1) fail(ErrorCode::kInvalidArgument, "min_not_face must be >= 1");
    std::vector<std::pair<StoredCandidate, Tally>> chosen;
    {
      std::shared_lock lock(mu_);
      for (const auto& s : candidates_) {
        const Tally t = tally_locked(s.record.candidate_id);
        if (t.not_face_votes >= opts.min_not_face && t.face_votes <= opts.max_face) chosen.emplace_back(s, t);
      }
    }
    std::sort(chosen.begin(), chosen.end(),
              [](const auto& a, const auto& b) { return a.first.record.candidate_id < b.first.record.candidate_id; });

    std::vector<std::tuple<double, double, double>> variants{{0.0, 0.0, 1.0}};
    if (opts.jitter)
      for (double sc : {0.92, 1.0, 1.08})
        for (double dy : {-1.0, 0.0, 1.0})
          for (double dx : {-1.0, 0.0, 1.0})
            if (!(dx == 0.0 && dy == 0.0 && sc == 1.0)) variants.emplace_back(dx, dy, sc);

    HardNegativeExport out;
    out.options = opts;
    out.candidates = static_cast<std::int64_t>(chosen.size());
    for (const auto& [s, t] : chosen) {
      const GrayImage thumb = tiles::read_image_file((dir_ / s.thumbnail.file).string());
      const auto& b = s.record.bbox;
      int k = 0;
      for (const auto& [dx, dy, sc] : variants) {
        const double w = b.w * sc, h = b.h * sc;
        const double x = b.cx() - w / 2 + dx * b.w / 12 - static_cast<double>(s.thumbnail.rect.x);
        const double y = b.cy() - h / 2 + dy * b.h / 12 - static_cast<double>(s.thumbnail.rect.y);
        if (x < 0 || y < 0 || x + w > thumb.width() || y + h > thumb.height()) continue;  // clipped at mosaic edge
        ExportedPatch p;
        p.candidate_id = s.record.candidate_id;
        p.file = p.candidate_id + "_" + std::to_string(k++) + ".png";
        p.face_votes = t.face_votes;
        p.not_face_votes = t.not_face_votes;
        p.pixels = resample_area(thumb, x, y, w, h, opts.base_window, opts.base_window);
        out.patches.push_back(std::move(p));
      }
    }
    return out;
  }

  StoreStats stats() const {
    std::shared_lock lock(mu_);
    StoreStats s;
    s.candidates = static_cast<std::int64_t>(candidates_.size());
    s.votes = static_cast<std::int64_t>(votes_.size());
    std::map<std::string, bool> voters;
    for (const auto& [key, v] : votes_) voters[v.voter_token] = true;
    s.voters = static_cast<std::int64_t>(voters.size());
    s.candidates_with_votes = static_cast<std::int64_t>(tallies_.size());
    for (const auto& c : candidates_) {
      ++s.by_body[std::string(geo::to_string(c.record.body))];
      ++s.by_consensus[c.record.consensus];
    }
    return s;
  }

  std::map<std::string, Tally> tallies() const {
    std::shared_lock lock(mu_);
    return tallies_;
  }

 private:
  Tally tally_locked(const std::string& id) const {
    const auto it = tallies_.find(id);
    return it == tallies_.end() ? Tally{id, 0, 0, 0.0} : it->second;
  }

  void write_snapshot(const std::vector<StoredCandidate>& all) const {
    std::string text;
    for (const auto& s : all) {
      auto j = pipeline::to_json(s.record);
      j["created_at"] = s.created_at;
      j["seq"] = s.seq;
      j["thumbnail"] = {{"file", s.thumbnail.file},
                        {"x", s.thumbnail.rect.x},
                        {"y", s.thumbnail.rect.y},
                        {"w", s.thumbnail.rect.w},
                        {"h", s.thumbnail.rect.h}};
      text += j.dump();
      text += '\n';
    }
    const auto tmp = snapshot_path().string() + ".tmp";
    pipeline::write_text_file(tmp, text);
    std::filesystem::rename(tmp, snapshot_path());
  }

  std::filesystem::path dir_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  std::vector<StoredCandidate> candidates_;
  std::map<std::string, std::size_t> index_;
  VoteTable votes_;
  std::map<std::string, Tally> tallies_;
};

}  // namespace facescan::service
