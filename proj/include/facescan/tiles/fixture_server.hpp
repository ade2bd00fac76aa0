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

// Serves a FixtureWorld as an XYZ tile endpoint on localhost, so HTTP
// sources can be exercised without the network.

#pragma once

#include <httplib.h>

#include <memory>
#include <string>
#include <thread>

#include "facescan/tiles/source.hpp"

namespace facescan::tiles {

class FixtureServer {
 public:
  FixtureServer(std::shared_ptr<FixtureWorld> world, int tile_size = 256) : world_(std::move(world)) {
    server_.Get(R"(/tiles/(\d+)/(\d+)/(\d+)\.png)", [this, tile_size](const httplib::Request& req,
                                                                      httplib::Response& res) {
      const FixtureWorld::Key k{std::stoi(req.matches[1]), std::stoll(req.matches[2]), std::stoll(req.matches[3])};
      switch (world_->request(k)) {
        case FixtureWorld::Outcome::kMissing: res.status = 404; return;
        case FixtureWorld::Outcome::kTransient: res.status = 503; return;
        case FixtureWorld::Outcome::kCorrupt:
          res.set_content("not an image", "image/png");
          return;
        case FixtureWorld::Outcome::kOk: {
          const auto png = world_->tile_png(k, tile_size);
          res.set_content(std::string(png.begin(), png.end()), "image/png");
          res.set_header("ETag", "\"" + std::to_string(std::get<1>(k)) + "-" + std::to_string(std::get<2>(k)) + "\"");
          return;
        }
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) fail(ErrorCode::kIo, "fixture server cannot bind");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FixtureServer() { server_.stop(); }

  FixtureServer(const FixtureServer&) = delete;
  FixtureServer& operator=(const FixtureServer&) = delete;

  int port() const { return port_; }
  std::string url_template() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/tiles/{z}/{x}/{y}.png";
  }
  FixtureWorld& world() { return *world_; }

 private:
  std::shared_ptr<FixtureWorld> world_;
  httplib::Server server_;
  int port_ = 0;
  std::jthread thread_;
};

}  // namespace facescan::tiles
