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

// Tile fetching: on-disk cache, retries with exponential backoff,
// per-tile single-flight and a global token bucket.

#pragma once

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>

#include "facescan/common.hpp"
#include "facescan/geo.hpp"
#include "facescan/tiles/codec.hpp"
#include "facescan/tiles/source.hpp"

namespace facescan::tiles {

struct TileData {
  geo::TileCoord coord;
  GrayImage pixels;
  std::chrono::system_clock::time_point fetched_at;
  std::optional<std::string> source_etag;
  bool from_cache = false;
};

/// Classic token bucket; `rate` <= 0 disables limiting.
class TokenBucket {
 public:
  explicit TokenBucket(double rate, double burst = 0.0)
      : rate_(rate), burst_(burst > 0.0 ? burst : std::max(1.0, rate)), tokens_(burst_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const double wait = (1.0 - tokens_) / rate_;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      lock.lock();
    }
  }

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

struct FetchOptions {
  std::string cache_root = "cache";  // FACESCAN_CACHE_DIR overrides
  bool use_cache = true;
  int max_retries = 3;               // retries after the first attempt
  double backoff_base_s = 0.5;       // 0.5 s, 1 s, 2 s
  double rate_limit_per_s = 10.0;
  double http_timeout_s = 10.0;
};

/// Applies the FACESCAN_CACHE_DIR environment override.
inline FetchOptions with_env_overrides(FetchOptions base) {
  if (const char* env = std::getenv("FACESCAN_CACHE_DIR"); env && *env) base.cache_root = env;
  return base;
}

struct FetchCounters {
  std::uint64_t cache_hits = 0;
  std::uint64_t network_calls = 0;
  std::uint64_t retries = 0;
};

namespace detail {

struct RawTile {
  enum class Status { kOk, kMissing, kTransient } status = Status::kOk;
  std::vector<std::uint8_t> bytes;
  std::optional<std::string> etag;
  std::string message;
};

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline UrlParts split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) fail(ErrorCode::kInvalidArgument, "url lacks a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace detail

/// Fetches tiles for one source. Safe to share across threads.
class TileFetcher {
 public:
  TileFetcher(TileSourceSpec spec, FetchOptions options, std::shared_ptr<FixtureWorld> fixture = nullptr)
      : spec_(std::move(spec)), options_(std::move(options)), fixture_(std::move(fixture)),
        bucket_(options_.rate_limit_per_s) {
    spec_.validate();
    if (spec_.kind == SourceKind::kFixture && !fixture_)
      fail(ErrorCode::kInvalidArgument, "fixture source needs a fixture world");
  }

  const TileSourceSpec& spec() const { return spec_; }
  const FetchOptions& options() const { return options_; }

  std::filesystem::path cache_path(const geo::TileCoord& c) const {
    return std::filesystem::path(options_.cache_root) / spec_.layer / std::to_string(c.z) / std::to_string(c.x) /
           (std::to_string(c.y) + ".png");
  }

  /// Throws Error with kNotFound, kDecodeError or kExhaustedRetries.
  TileData fetch(const geo::TileCoord& coord) {
    if (!coord.valid() || coord.z > spec_.max_zoom) fail(ErrorCode::kOutOfRange, "tile outside source pyramid");
    const Key key{coord.z, coord.x, coord.y};
    std::shared_future<TileData> shared;
    bool leader = false;
    std::promise<TileData> promise;
    {
      std::lock_guard lock(mu_);
      if (auto it = inflight_.find(key); it != inflight_.end()) {
        shared = it->second;
      } else {
        shared = promise.get_future().share();
        inflight_.emplace(key, shared);
        leader = true;
      }
    }
    if (leader) {
      try {
        promise.set_value(fetch_uncoalesced(coord));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
      std::lock_guard lock(mu_);
      inflight_.erase(key);
    }
    TileData out = shared.get();
    out.coord = coord;
    return out;
  }

  FetchCounters counters() const {
    std::lock_guard lock(mu_);
    return counters_;
  }

 private:
  using Key = std::tuple<int, std::int64_t, std::int64_t>;

  TileData fetch_uncoalesced(const geo::TileCoord& coord) {
    const auto path = cache_path(coord);
    if (options_.use_cache) {
      std::error_code ec;
      if (std::filesystem::is_regular_file(path, ec)) {
        try {
          TileData t{coord, read_image_file(path.string()), std::chrono::system_clock::now(), std::nullopt, true};
          if (t.pixels.width() == spec_.tile_size && t.pixels.height() == spec_.tile_size) {
            std::lock_guard lock(mu_);
            ++counters_.cache_hits;
            return t;
          }
        } catch (const Error&) {
          // Unreadable cache entry: refetch and overwrite.
        }
      }
    }

    for (int attempt = 0;; ++attempt) {
      if (attempt > 0) {
        {
          std::lock_guard lock(mu_);
          ++counters_.retries;
        }
        const double delay = options_.backoff_base_s * static_cast<double>(1 << (attempt - 1));
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      const detail::RawTile raw = fetch_raw(coord);
      if (raw.status == detail::RawTile::Status::kMissing) fail(ErrorCode::kNotFound, "tile not found: " + raw.message);
      if (raw.status == detail::RawTile::Status::kTransient) {
        if (attempt >= options_.max_retries)
          fail(ErrorCode::kExhaustedRetries, "tile fetch failed after retries: " + raw.message);
        continue;
      }
      GrayImage pixels = decode_image(raw.bytes);
      if (pixels.width() != spec_.tile_size || pixels.height() != spec_.tile_size)
        fail(ErrorCode::kDecodeError, "tile has wrong dimensions");
      if (options_.use_cache) write_cache(path, pixels);
      return {coord, std::move(pixels), std::chrono::system_clock::now(), raw.etag, false};
    }
  }

  detail::RawTile fetch_raw(const geo::TileCoord& c) {
    {
      std::lock_guard lock(mu_);
      ++counters_.network_calls;
    }
    detail::RawTile out;
    switch (spec_.kind) {
      case SourceKind::kFixture: {
        const Key k{c.z, c.x, c.y};
        switch (fixture_->request(k)) {
          case FixtureWorld::Outcome::kMissing: out.status = detail::RawTile::Status::kMissing; break;
          case FixtureWorld::Outcome::kTransient:
            out.status = detail::RawTile::Status::kTransient;
            out.message = "scripted failure";
            break;
          case FixtureWorld::Outcome::kCorrupt: out.bytes = {0x89, 'P', 'N', 'G', 0, 1, 2}; break;
          case FixtureWorld::Outcome::kOk: out.bytes = fixture_->tile_png(k, spec_.tile_size); break;
        }
        out.message = out.message.empty() ? "fixture" : out.message;
        return out;
      }
      case SourceKind::kLocalDir: {
        const std::string path = expand_template(spec_.uri, c.z, c.x, c.y);
        std::error_code ec;
        if (!std::filesystem::is_regular_file(path, ec)) {
          out.status = detail::RawTile::Status::kMissing;
          out.message = path;
          return out;
        }
        out.bytes = read_file_bytes(path);
        return out;
      }
      case SourceKind::kHttpTemplate: {
        bucket_.acquire();
        const auto url = detail::split_url(expand_template(spec_.uri, c.z, c.x, c.y));
        httplib::Client client(url.origin);
        const auto timeout = std::chrono::duration<double>(options_.http_timeout_s);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_follow_location(true);
        const auto res = client.Get(url.path);
        out.message = url.origin + url.path;
        if (!res) {
          out.status = detail::RawTile::Status::kTransient;
          out.message += ": " + httplib::to_string(res.error());
        } else if (res->status == 404 || res->status == 204) {
          out.status = detail::RawTile::Status::kMissing;
        } else if (res->status == 429 || res->status >= 500) {
          out.status = detail::RawTile::Status::kTransient;
          out.message += ": HTTP " + std::to_string(res->status);
        } else if (res->status != 200) {
          out.status = detail::RawTile::Status::kMissing;
          out.message += ": HTTP " + std::to_string(res->status);
        } else {
          out.bytes.assign(res->body.begin(), res->body.end());
          if (res->has_header("ETag")) out.etag = res->get_header_value("ETag");
        }
        return out;
      }
    }
    return out;
  }

  // Write-then-rename so readers never observe a partial file.
  void write_cache(const std::filesystem::path& path, const GrayImage& pixels) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::kIo, "cannot create cache directory " + path.parent_path().string());
    std::filesystem::path tmp = path;
    {
      std::lock_guard lock(mu_);
      tmp += ".tmp." + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "." + std::to_string(++tmp_counter_);
    }
    write_png_file(pixels, tmp.string());
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      std::filesystem::remove(tmp, ec);
      fail(ErrorCode::kIo, "cannot move cache file into place: " + path.string());
    }
  }

  TileSourceSpec spec_;
  FetchOptions options_;
  std::shared_ptr<FixtureWorld> fixture_;
  TokenBucket bucket_;
  mutable std::mutex mu_;
  std::map<Key, std::shared_future<TileData>> inflight_;
  FetchCounters counters_;
  std::uint64_t tmp_counter_ = 0;
};

/// A tile rectangle [x0, x1] x [y0, y1] (inclusive) at zoom z plus a halo.
struct RegionRequest {
  int z = 0;
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int halo_px = 0;

  void validate() const {
    if (halo_px < 0) fail(ErrorCode::kInvalidArgument, "halo must be >= 0");
    if (x1 < x0 || y1 < y0) fail(ErrorCode::kInvalidArgument, "empty tile rectangle");
  }
};

struct AssembledRegion {
  GrayImage image;
  geo::PixelPoint origin;             // global pixel of image (0, 0)
  geo::PixelRect rect;                // global pixels covered by image
  std::int64_t missing_pixels = 0;    // blank-filled (absent or undecodable tiles)
  std::vector<geo::TileCoord> missing_tiles;
};

inline std::int64_t mosaic_pixels(int z, int tile_size) { return std::int64_t{tile_size} << z; }

/// Stitches the tiles overlapping `rect` (clamped to the mosaic). Absent or
/// undecodable tiles are blank-filled and counted; exhausted retries throw.
inline AssembledRegion assemble_pixels(TileFetcher& fetcher, int z, const geo::PixelRect& rect) {
  const int ts = fetcher.spec().tile_size;
  const std::int64_t size = mosaic_pixels(z, ts);
  const geo::PixelRect r = geo::intersect(rect, {0, 0, size, size});
  if (r.empty()) fail(ErrorCode::kInvalidArgument, "region lies outside the mosaic");
  if (r.w > (1 << 15) || r.h > (1 << 15)) fail(ErrorCode::kInvalidArgument, "region too large to assemble");
  AssembledRegion out;
  out.image = GrayImage(static_cast<int>(r.w), static_cast<int>(r.h));
  out.origin = {static_cast<double>(r.x), static_cast<double>(r.y), z, ts};
  out.rect = r;
  geo::TileCoord coord;
  coord.z = z;
  coord.body = geo::Body::from(fetcher.spec().body);
  coord.layer = fetcher.spec().layer;
  for (std::int64_t ty = r.y / ts; ty <= (r.bottom() - 1) / ts; ++ty) {
    for (std::int64_t tx = r.x / ts; tx <= (r.right() - 1) / ts; ++tx) {
      coord.x = tx;
      coord.y = ty;
      const geo::PixelRect tile_rect{tx * ts, ty * ts, ts, ts};
      const geo::PixelRect part = geo::intersect(tile_rect, r);
      try {
        const TileData t = fetcher.fetch(coord);
        for (std::int64_t y = part.y; y < part.bottom(); ++y) {
          const auto src = t.pixels.row(static_cast<int>(y - tile_rect.y));
          auto* dst = &out.image.at(static_cast<int>(part.x - r.x), static_cast<int>(y - r.y));
          std::copy_n(src.begin() + (part.x - tile_rect.x), part.w, dst);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotFound && e.code() != ErrorCode::kDecodeError) throw;
        out.missing_pixels += part.area();
        out.missing_tiles.push_back(coord);
      }
    }
  }
  return out;
}

/// Tile rectangle expanded by the halo on all sides, clamped at mosaic edges.
inline geo::PixelRect region_pixel_rect(const RegionRequest& req, int tile_size) {
  req.validate();
  const std::int64_t size = mosaic_pixels(req.z, tile_size);
  const geo::PixelRect expanded{req.x0 * tile_size - req.halo_px, req.y0 * tile_size - req.halo_px,
                                (req.x1 - req.x0 + 1) * tile_size + 2 * std::int64_t{req.halo_px},
                                (req.y1 - req.y0 + 1) * tile_size + 2 * std::int64_t{req.halo_px}};
  return geo::intersect(expanded, {0, 0, size, size});
}

inline AssembledRegion assemble_region(TileFetcher& fetcher, const RegionRequest& req) {
  return assemble_pixels(fetcher, req.z, region_pixel_rect(req, fetcher.spec().tile_size));
}

/// True for featureless tiles (blank ocean, missing data).
inline bool low_information(const GrayImage& tile, double stddev_threshold = 4.0) {
  if (tile.empty()) return true;
  return image_mean_stddev(tile).second < stddev_threshold;
}

}  // namespace facescan::tiles
