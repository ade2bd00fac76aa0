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

// Review API over a Store.
//
//   GET  /api/v1/candidates?body=&layer=&min_consensus=&sort=&page=&page_size=
//   GET  /api/v1/candidates/{id}[?voter_token=]
//   GET  /api/v1/candidates/{id}/thumbnail.png
//   POST /api/v1/candidates/{id}/votes          {verdict, voter_token} -> tally
//   GET  /api/v1/export/hard-negatives?min_not_face=&max_face=&jitter=
//   GET  /api/v1/stats
// Anything else under / is served from the optional static directory.

#pragma once

#include <httplib.h>
#include <openssl/evp.h>

#include <filesystem>
#include <string>
#include <thread>

#include "facescan/service/store.hpp"

namespace facescan::service {

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) fail(ErrorCode::kParse, "base64 length not a multiple of 4");
  std::string out(3 * (text.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) fail(ErrorCode::kParse, "invalid base64");
  std::size_t pad = 0;
  for (auto it = text.rbegin(); it != text.rend() && *it == '='; ++it) ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline ordered_json item_json(const ListItem& item) {
  auto j = pipeline::to_json(item.candidate.record);
  j["created_at"] = item.candidate.created_at;
  j["thumbnail_url"] = "/api/v1/candidates/" + item.candidate.record.candidate_id + "/thumbnail.png";
  j["tally"] = to_json(item.tally);
  return j;
}

/// Export with patches inlined as base64 PNG, for clients that retrain
/// without access to the store directory.
inline ordered_json export_json(const HardNegativeExport& e) {
  auto j = manifest_json(e);
  for (std::size_t i = 0; i < e.patches.size(); ++i) {
    const auto png = tiles::encode_png(e.patches[i].pixels);
    j["patches"][i]["png_base64"] = base64_encode({reinterpret_cast<const char*>(png.data()), png.size()});
  }
  return j;
}

/// Inverse of export_json: the patch images in manifest order.
inline std::vector<GrayImage> patches_from_export_json(const nlohmann::json& j) {
  if (j.value("format", "") != "facescan-negatives-v1") fail(ErrorCode::kParse, "not a negatives export");
  std::vector<GrayImage> out;
  for (const auto& p : j.at("patches")) {
    const auto bytes = base64_decode(p.at("png_base64").get<std::string>());
    out.push_back(tiles::decode_image(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size())));
  }
  return out;
}

inline ListQuery query_from_params(const httplib::Request& req) {
  ListQuery q;
  const auto param = [&](const char* k) { return req.has_param(k) ? req.get_param_value(k) : std::string(); };
  if (const auto b = param("body"); !b.empty()) q.body = geo::body_from_string(b).name;
  if (const auto l = param("layer"); !l.empty()) q.layer = l;
  if (const auto m = param("min_consensus"); !m.empty()) q.min_consensus = static_cast<int>(parse_int(m));
  q.sort = sort_key_from_string(param("sort"));
  if (const auto p = param("page"); !p.empty()) q.page = static_cast<int>(parse_int(p));
  if (const auto s = param("page_size"); !s.empty()) q.page_size = static_cast<int>(parse_int(s));
  q.validate();
  return q;
}

class ReviewServer {
 public:
  ReviewServer(Store& store, const std::string& host = "127.0.0.1", int port = 0,
               const std::filesystem::path& static_dir = {})
      : store_(store) {
    using httplib::Request;
    using httplib::Response;
    const auto reply = [](Response& res, const ordered_json& j, int status = 200) {
      res.status = status;
      res.set_content(j.dump(), "application/json");
    };

    server_.Get("/api/v1/candidates", [this, reply](const Request& req, Response& res) {
      const auto page = store_.list(query_from_params(req));
      ordered_json items = ordered_json::array();
      for (const auto& it : page.items) items.push_back(item_json(it));
      reply(res, {{"items", items}, {"page", page.page}, {"page_size", page.page_size}, {"total", page.total}});
    });
    server_.Get(R"(/api/v1/candidates/([0-9a-f]+))", [this, reply](const Request& req, Response& res) {
      const auto item = store_.get(req.matches[1]);
      if (!item) {
        reply(res, {{"error", "unknown candidate"}}, 404);
        return;
      }
      auto j = item_json(*item);
      if (req.has_param("voter_token")) {
        const auto v = store_.vote_of(req.matches[1], req.get_param_value("voter_token"));
        j["my_vote"] = v ? ordered_json(to_string(*v)) : ordered_json(nullptr);
      }
      reply(res, j);
    });
    server_.Get(R"(/api/v1/candidates/([0-9a-f]+)/thumbnail\.png)", [this](const Request& req, Response& res) {
      const auto bytes = tiles::read_file_bytes(store_.thumbnail_path(req.matches[1]).string());
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });
    server_.Post(R"(/api/v1/candidates/([0-9a-f]+)/votes)", [this, reply](const Request& req, Response& res) {
      const auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) fail(ErrorCode::kParse, "request body must be a JSON object");
      const auto tally = store_.cast_vote(req.matches[1], verdict_from_string(body.value("verdict", std::string())),
                                          body.value("voter_token", std::string()));
      reply(res, to_json(tally));
    });
    server_.Get("/api/v1/export/hard-negatives", [this, reply](const Request& req, Response& res) {
      ExportOptions opts;
      if (req.has_param("min_not_face")) opts.min_not_face = parse_int(req.get_param_value("min_not_face"));
      if (req.has_param("max_face")) opts.max_face = parse_int(req.get_param_value("max_face"));
      if (req.has_param("jitter")) opts.jitter = req.get_param_value("jitter") != "false" && req.get_param_value("jitter") != "0";
      reply(res, export_json(store_.export_hard_negatives(opts)));
    });
    server_.Get("/api/v1/stats", [this, reply](const Request&, Response& res) { reply(res, to_json(store_.stats())); });

    if (!static_dir.empty()) {
      if (!server_.set_mount_point("/", static_dir.string()))
        fail(ErrorCode::kNotFound, "static directory missing: " + static_dir.string());
    }
    server_.set_exception_handler([reply](const Request&, Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        const int status = e.code() == ErrorCode::kNotFound ? 404
                           : e.code() == ErrorCode::kIo ? 500
                                                        : 400;
        reply(res, {{"error", e.what()}}, status);
      } catch (const std::exception& e) {
        reply(res, {{"error", e.what()}}, 500);
      }
    });

    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) fail(ErrorCode::kIo, "review server cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~ReviewServer() { server_.stop(); }

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  int port() const { return port_; }
  std::string url() const {
    return "http://" + (host_ == "0.0.0.0" ? std::string("127.0.0.1") : host_) + ":" + std::to_string(port_);
  }

 private:
  Store& store_;
  httplib::Server server_;
  std::string host_;
  int port_ = 0;
  std::jthread thread_;
};

}  // namespace facescan::service
