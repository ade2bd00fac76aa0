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

// Coordinator/worker scanning. The coordinator leases units to polling
// workers; leases are renewed by heartbeat and return to pending when they
// expire. Results are accepted once per unit.
//
// Wire protocol (JSON bodies):
//   GET  /api/v1/job                         {job_id, job, detectors}
//   GET  /api/v1/models/{detector_id}        model text
//   POST /api/v1/units/claim       {worker_id}            200 unit | 204
//   POST /api/v1/units/{id}/heartbeat {lease_token}       200 | 409 lease lost
//   POST /api/v1/units/{id}/result {lease_token, result}  200 {status: accepted|duplicate}
//   POST /api/v1/units/{id}/failure {lease_token, error}  200
//   GET  /api/v1/jobs/{job_id}/report                     report
//   GET  /api/v1/jobs/{job_id}/candidates                 JSON lines
// A 204 from claim carries X-Job-Complete: true once nothing is left to do.

#pragma once

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "facescan/classifier/model_io.hpp"
#include "facescan/pipeline/execute.hpp"
#include "facescan/pipeline/job.hpp"

namespace facescan::pipeline {

inline double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct Lease {
  WorkUnit unit;
  std::string lease_token;
  double lease_seconds = 0.0;
};

/// Unit state machine. Every operation runs under one lock and first
/// expires stale leases, so outcomes do not depend on request interleaving.
class Coordinator {
 public:
  using Clock = std::function<double()>;

  Coordinator(ScanJob job, std::string job_text, std::map<std::string, std::string> model_texts,
              Clock clock = steady_seconds)
      : job_(std::move(job)), job_text_(std::move(job_text)), models_(std::move(model_texts)),
        clock_(std::move(clock)), units_(partition(job_)), results_(units_.size()) {}

  const ScanJob& job() const { return job_; }
  const std::string& job_text() const { return job_text_; }
  const std::map<std::string, std::string>& models() const { return models_; }

  std::optional<Lease> claim(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    expire_locked();
    for (auto& u : units_) {
      if (u.status != UnitStatus::kPending) continue;
      u.status = UnitStatus::kLeased;
      ++u.attempt;
      u.lease_expiry = clock_() + job_.lease_seconds;
      const std::string token = std::to_string(u.unit_id) + ":" + std::to_string(u.attempt);
      holders_[u.unit_id] = worker_id;
      return Lease{u, token, job_.lease_seconds};
    }
    return std::nullopt;
  }

  /// Renews a live lease; false when the lease was lost.
  bool heartbeat(std::int64_t unit_id, const std::string& token) {
    std::lock_guard lock(mu_);
    expire_locked();
    WorkUnit* u = find_locked(unit_id);
    if (!u || u->status != UnitStatus::kLeased || token != current_token(*u)) return false;
    u->lease_expiry = clock_() + job_.lease_seconds;
    return true;
  }

  enum class SubmitStatus { kAccepted, kDuplicate, kUnknownUnit, kInvalid };

  /// First result for a unit wins, whoever sends it; later ones are
  /// acknowledged and discarded.
  SubmitStatus submit(const UnitResult& r) {
    std::lock_guard lock(mu_);
    expire_locked();
    WorkUnit* u = find_locked(r.unit_id);
    if (!u) return SubmitStatus::kUnknownUnit;
    if (u->status == UnitStatus::kDone) return SubmitStatus::kDuplicate;
    if (r.pixels_scanned + r.pixels_missing != u->rect.area() || r.pixels_scanned < 0 || r.pixels_missing < 0)
      return SubmitStatus::kInvalid;
    u->status = UnitStatus::kDone;
    results_[static_cast<std::size_t>(u->unit_id)] = r;
    cv_.notify_all();
    return SubmitStatus::kAccepted;
  }

  /// A worker gave up on its lease (unit error). Counts as a failed attempt.
  void report_failure(std::int64_t unit_id, const std::string& token, const std::string& error) {
    std::lock_guard lock(mu_);
    expire_locked();
    WorkUnit* u = find_locked(unit_id);
    if (!u || u->status != UnitStatus::kLeased || token != current_token(*u)) return;
    errors_[unit_id] = error;
    release_locked(*u);
  }

  bool complete() {
    std::lock_guard lock(mu_);
    expire_locked();
    return complete_locked();
  }

  /// Blocks until complete or the timeout passes; returns complete().
  bool wait_complete(double timeout_s) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    std::unique_lock lock(mu_);
    for (;;) {
      expire_locked();
      if (complete_locked()) return true;
      if (std::chrono::steady_clock::now() >= deadline) return false;
      cv_.wait_for(lock, std::chrono::milliseconds(100));
    }
  }

  JobReport report() {
    std::lock_guard lock(mu_);
    expire_locked();
    std::vector<const UnitResult*> ptrs;
    for (const auto& r : results_) ptrs.push_back(r ? &*r : nullptr);
    return make_report(job_, units_, ptrs);
  }

  std::vector<WorkUnit> units() {
    std::lock_guard lock(mu_);
    expire_locked();
    return units_;
  }

  std::map<std::int64_t, std::string> errors() {
    std::lock_guard lock(mu_);
    return errors_;
  }

 private:
  static std::string current_token(const WorkUnit& u) {
    return std::to_string(u.unit_id) + ":" + std::to_string(u.attempt);
  }

  WorkUnit* find_locked(std::int64_t id) {
    if (id < 0 || static_cast<std::size_t>(id) >= units_.size()) return nullptr;
    return &units_[static_cast<std::size_t>(id)];
  }

  void release_locked(WorkUnit& u) {
    u.status = u.attempt >= job_.max_attempts ? UnitStatus::kFailed : UnitStatus::kPending;
    holders_.erase(u.unit_id);
    cv_.notify_all();
  }

  void expire_locked() {
    const double now = clock_();
    for (auto& u : units_) {
      if (u.status == UnitStatus::kLeased && u.lease_expiry <= now) {
        errors_[u.unit_id] = "lease expired";
        release_locked(u);
      }
    }
  }

  bool complete_locked() const {
    for (const auto& u : units_)
      if (u.status != UnitStatus::kDone && u.status != UnitStatus::kFailed) return false;
    return true;
  }

  ScanJob job_;
  std::string job_text_;
  std::map<std::string, std::string> models_;
  Clock clock_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<WorkUnit> units_;
  std::vector<std::optional<UnitResult>> results_;
  std::map<std::int64_t, std::string> holders_;
  std::map<std::int64_t, std::string> errors_;
};

inline ordered_json lease_to_json(const Lease& l) {
  const auto& u = l.unit;
  return ordered_json{{"unit_id", u.unit_id},       {"job_id", u.job_id},
                      {"source", u.source},         {"rect", {u.rect.x, u.rect.y, u.rect.w, u.rect.h}},
                      {"attempt", u.attempt},       {"lease_token", l.lease_token},
                      {"lease_seconds", l.lease_seconds}};
}

inline Lease lease_from_json(const nlohmann::json& j) {
  try {
    Lease l;
    l.unit.unit_id = j.at("unit_id").get<std::int64_t>();
    l.unit.job_id = j.at("job_id").get<std::string>();
    l.unit.source = j.at("source").get<std::size_t>();
    const auto& r = j.at("rect");
    l.unit.rect = {r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>(), r.at(2).get<std::int64_t>(),
                   r.at(3).get<std::int64_t>()};
    l.unit.attempt = j.at("attempt").get<int>();
    l.unit.status = UnitStatus::kLeased;
    l.lease_token = j.at("lease_token").get<std::string>();
    l.lease_seconds = j.at("lease_seconds").get<double>();
    return l;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("lease: ") + e.what());
  }
}

/// HTTP front end for a Coordinator.
class CoordinatorServer {
 public:
  CoordinatorServer(Coordinator& coord, const std::string& host = "127.0.0.1", int port = 0) : coord_(coord) {
    using httplib::Request;
    using httplib::Response;
    const auto json_reply = [](Response& res, const ordered_json& j, int status = 200) {
      res.status = status;
      res.set_content(j.dump(), "application/json");
    };
    const auto parse_body = [](const Request& req) {
      auto j = nlohmann::json::parse(req.body.empty() ? std::string("{}") : req.body, nullptr, false);
      if (j.is_discarded() || !j.is_object()) fail(ErrorCode::kParse, "request body must be a JSON object");
      return j;
    };

    server_.Get("/api/v1/job", [this, json_reply](const Request&, Response& res) {
      ordered_json ids = ordered_json::array();
      for (const auto& d : coord_.job().detectors) ids.push_back(d.id);
      json_reply(res, {{"job_id", coord_.job().job_id}, {"job", coord_.job_text()}, {"detectors", ids}});
    });
    server_.Get(R"(/api/v1/models/([A-Za-z0-9_.-]+))", [this](const Request& req, Response& res) {
      const auto it = coord_.models().find(req.matches[1]);
      if (it == coord_.models().end()) {
        res.status = 404;
        return;
      }
      res.set_content(it->second, "text/plain");
    });
    server_.Post("/api/v1/units/claim", [this, json_reply, parse_body](const Request& req, Response& res) {
      const auto body = parse_body(req);
      const auto lease = coord_.claim(body.value("worker_id", std::string("anonymous")));
      if (!lease) {
        res.status = 204;
        res.set_header("X-Job-Complete", coord_.complete() ? "true" : "false");
        return;
      }
      json_reply(res, lease_to_json(*lease));
    });
    server_.Post(R"(/api/v1/units/(\d+)/heartbeat)", [this, json_reply, parse_body](const Request& req, Response& res) {
      const auto body = parse_body(req);
      const bool ok = coord_.heartbeat(std::stoll(req.matches[1]), body.value("lease_token", std::string()));
      json_reply(res, {{"renewed", ok}}, ok ? 200 : 409);
    });
    server_.Post(R"(/api/v1/units/(\d+)/result)", [this, json_reply, parse_body](const Request& req, Response& res) {
      const auto body = parse_body(req);
      UnitResult r = unit_result_from_json(body.at("result"));
      if (r.unit_id != std::stoll(req.matches[1])) {
        json_reply(res, {{"error", "unit id mismatch"}}, 400);
        return;
      }
      switch (coord_.submit(r)) {
        case Coordinator::SubmitStatus::kAccepted: json_reply(res, {{"status", "accepted"}}); return;
        case Coordinator::SubmitStatus::kDuplicate: json_reply(res, {{"status", "duplicate"}}); return;
        case Coordinator::SubmitStatus::kUnknownUnit: json_reply(res, {{"error", "unknown unit"}}, 404); return;
        case Coordinator::SubmitStatus::kInvalid: json_reply(res, {{"error", "pixel accounting mismatch"}}, 422); return;
      }
    });
    server_.Post(R"(/api/v1/units/(\d+)/failure)", [this, json_reply, parse_body](const Request& req, Response& res) {
      const auto body = parse_body(req);
      coord_.report_failure(std::stoll(req.matches[1]), body.value("lease_token", std::string()),
                            body.value("error", std::string()));
      json_reply(res, {{"status", "recorded"}});
    });
    server_.Get(R"(/api/v1/jobs/([^/]+)/report)", [this, json_reply](const Request& req, Response& res) {
      if (req.matches[1] != coord_.job().job_id) {
        json_reply(res, {{"error", "unknown job"}}, 404);
        return;
      }
      json_reply(res, to_json(coord_.report()));
    });
    server_.Get(R"(/api/v1/jobs/([^/]+)/candidates)", [this, json_reply](const Request& req, Response& res) {
      if (req.matches[1] != coord_.job().job_id) {
        json_reply(res, {{"error", "unknown job"}}, 404);
        return;
      }
      res.set_content(to_jsonl(coord_.report().candidates), "application/x-ndjson");
    });
    server_.set_exception_handler([json_reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        json_reply(res, {{"error", e.what()}}, e.code() == ErrorCode::kNotFound ? 404 : 400);
      } catch (const nlohmann::json::exception& e) {
        json_reply(res, {{"error", e.what()}}, 400);
      } catch (const std::exception& e) {
        json_reply(res, {{"error", e.what()}}, 500);
      }
    });

    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) fail(ErrorCode::kIo, "coordinator cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~CoordinatorServer() { server_.stop(); }

  CoordinatorServer(const CoordinatorServer&) = delete;
  CoordinatorServer& operator=(const CoordinatorServer&) = delete;

  int port() const { return port_; }
  std::string url() const { return "http://" + (host_ == "0.0.0.0" ? std::string("127.0.0.1") : host_) + ":" + std::to_string(port_); }

 private:
  Coordinator& coord_;
  httplib::Server server_;
  std::string host_;
  int port_ = 0;
  std::jthread thread_;
};

/// Reads a job file and its models, ready to coordinate.
inline std::unique_ptr<Coordinator> make_coordinator(const std::string& job_path,
                                                     Coordinator::Clock clock = steady_seconds) {
  const std::string text = read_text_file(job_path);
  ScanJob job = parse_job(text, std::filesystem::path(job_path).parent_path());
  std::map<std::string, std::string> models;
  for (const auto& d : job.detectors) {
    const std::string model = read_text_file(job.model_path(d).string());
    (void)classifier::load_model(model);  // fail early on a bad model
    models[d.id] = model;
  }
  return std::make_unique<Coordinator>(std::move(job), text, std::move(models), std::move(clock));
}

struct WorkerOptions {
  std::string coordinator_url;
  std::string worker_id = "worker";
  double poll_interval_s = 0.2;
  int kill_after_claims = 0;        // > 0: abandon the n-th claimed unit and exit (fault injection)
  const std::atomic<bool>* stop = nullptr;
  double http_timeout_s = 30.0;
};

struct WorkerSummary {
  int units_completed = 0;
  int units_failed = 0;
  bool killed = false;
};

namespace detail {

inline httplib::Client make_client(const std::string& url, double timeout_s) {
  httplib::Client c(url);
  const auto t = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(timeout_s));
  c.set_connection_timeout(t);
  c.set_read_timeout(t);
  c.set_write_timeout(t);
  return c;
}

inline nlohmann::json get_json(httplib::Client& c, const std::string& path) {
  const auto res = c.Get(path);
  if (!res) fail(ErrorCode::kTransient, "coordinator unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) fail(ErrorCode::kIo, path + ": HTTP " + std::to_string(res->status));
  return nlohmann::json::parse(res->body);
}

}  // namespace detail

/// Polls the coordinator until the job completes. Each unit runs with a
/// heartbeat thread renewing its lease every third of the lease period.
inline WorkerSummary run_worker(const WorkerOptions& opts) {
  auto client = detail::make_client(opts.coordinator_url, opts.http_timeout_s);
  const auto job_doc = detail::get_json(client, "/api/v1/job");
  ScanJob job = parse_job(job_doc.at("job").get<std::string>());
  std::vector<detector::NamedCascade> detectors;
  for (const auto& d : job.detectors) {
    const auto res = client.Get("/api/v1/models/" + d.id);
    if (!res || res->status != 200) fail(ErrorCode::kIo, "cannot fetch model " + d.id);
    detectors.push_back({d.id, classifier::load_model(res->body)});
  }
  const auto fetchers = make_fetchers(job);

  WorkerSummary summary;
  int claims = 0;
  for (;;) {
    if (opts.stop && opts.stop->load()) return summary;
    const std::string claim_body = ordered_json{{"worker_id", opts.worker_id}}.dump();
    const auto res = client.Post("/api/v1/units/claim", claim_body, "application/json");
    if (!res) {
      std::this_thread::sleep_for(std::chrono::duration<double>(opts.poll_interval_s));
      continue;
    }
    if (res->status == 204) {
      if (res->get_header_value("X-Job-Complete") == "true") return summary;
      std::this_thread::sleep_for(std::chrono::duration<double>(opts.poll_interval_s));
      continue;
    }
    if (res->status != 200) fail(ErrorCode::kIo, "claim failed: HTTP " + std::to_string(res->status));
    const Lease lease = lease_from_json(nlohmann::json::parse(res->body));
    if (opts.kill_after_claims > 0 && ++claims >= opts.kill_after_claims) {
      summary.killed = true;  // simulated crash: the lease is simply abandoned
      return summary;
    }

    std::atomic<bool> done{false};
    std::mutex hb_mu;
    std::condition_variable hb_cv;
    std::jthread heartbeat([&] {
      auto hb_client = detail::make_client(opts.coordinator_url, opts.http_timeout_s);
      const auto period = std::chrono::duration<double>(lease.lease_seconds / 3.0);
      const std::string body = ordered_json{{"lease_token", lease.lease_token}}.dump();
      std::unique_lock lock(hb_mu);
      while (!hb_cv.wait_for(lock, period, [&] { return done.load(); })) {
        lock.unlock();
        hb_client.Post("/api/v1/units/" + std::to_string(lease.unit.unit_id) + "/heartbeat", body,
                       "application/json");
        lock.lock();
      }
    });
    const auto stop_heartbeat = [&] {
      {
        std::lock_guard lock(hb_mu);
        done = true;
      }
      hb_cv.notify_all();
      if (heartbeat.joinable()) heartbeat.join();
    };

    const std::string unit_path = "/api/v1/units/" + std::to_string(lease.unit.unit_id);
    try {
      const UnitResult r = run_unit(job, lease.unit, *fetchers.at(lease.unit.source), detectors);
      stop_heartbeat();
      const std::string body = ordered_json{{"lease_token", lease.lease_token}, {"result", to_json(r)}}.dump();
      for (int attempt = 0;; ++attempt) {
        const auto sent = client.Post(unit_path + "/result", body, "application/json");
        if (sent && sent->status == 200) break;
        if (attempt >= 3) fail(ErrorCode::kExhaustedRetries, "cannot deliver unit result");
        std::this_thread::sleep_for(std::chrono::duration<double>(opts.poll_interval_s));
      }
      ++summary.units_completed;
    } catch (const Error& e) {
      stop_heartbeat();
      if (e.code() == ErrorCode::kExhaustedRetries && std::string(e.what()) == "cannot deliver unit result") throw;
      const std::string body = ordered_json{{"lease_token", lease.lease_token}, {"error", e.what()}}.dump();
      client.Post(unit_path + "/failure", body, "application/json");
      ++summary.units_failed;
    }
  }
}

}  // namespace facescan::pipeline
