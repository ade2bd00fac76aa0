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

#include <gtest/gtest.h>

#include "facescan/pipeline/coordinator.hpp"
#include "support.hpp"

namespace facescan::pipeline {
namespace {

struct FakeClock {
  double now = 1000.0;
  Coordinator::Clock fn() {
    return [this] { return now; };
  }
};

Coordinator make(FakeClock& clock, int max_attempts = 3) {
  auto text = testing::fixture_job_toml("c", 4, 1, "[0, 0, 512, 512]", 2);
  text.insert(0, "max_attempts = " + std::to_string(max_attempts) + "\n");
  auto job = parse_job(text);
  return Coordinator(job, text, {{"tiny", classifier::save_model(testing::tiny_model())}}, clock.fn());
}

UnitResult fake_result(const WorkUnit& u) {
  UnitResult r;
  r.unit_id = u.unit_id;
  r.pixels_scanned = u.rect.area();
  return r;
}

TEST(Coordinator, ExpiredLeaseIsReissuedWithNewAttempt) {
  FakeClock clock;
  auto c = make(clock);
  const auto a = c.claim("w1");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->unit.unit_id, 0);
  EXPECT_EQ(a->lease_token, "0:1");
  clock.now += 4.9;
  EXPECT_TRUE(c.heartbeat(0, "0:1"));  // extends to now + 5
  clock.now += 4.9;
  EXPECT_EQ(c.units()[0].status, UnitStatus::kLeased);
  clock.now += 0.2;
  EXPECT_EQ(c.units()[0].status, UnitStatus::kPending);
  EXPECT_FALSE(c.heartbeat(0, "0:1"));
  const auto b = c.claim("w2");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->unit.unit_id, 0);
  EXPECT_EQ(b->lease_token, "0:2");
  EXPECT_FALSE(c.heartbeat(0, "0:1"));  // stale token
  EXPECT_TRUE(c.heartbeat(0, "0:2"));
}

TEST(Coordinator, UnitFailsAfterMaxAttempts) {
  FakeClock clock;
  auto c = make(clock, 2);
  for (int attempt = 1; attempt <= 2; ++attempt) {
    const auto l = c.claim("w");  // lowest pending unit first
    ASSERT_TRUE(l);
    EXPECT_EQ(l->unit.unit_id, 0);
    EXPECT_EQ(l->unit.attempt, attempt);
    c.report_failure(0, l->lease_token, "boom");
  }
  EXPECT_EQ(c.units()[0].status, UnitStatus::kFailed);
  EXPECT_EQ(c.errors().at(0), "boom");
  for (const auto& u : c.units()) {
    if (u.unit_id == 0) continue;
    ASSERT_EQ(c.submit(fake_result(u)), Coordinator::SubmitStatus::kAccepted);
  }
  EXPECT_TRUE(c.complete());
  const auto rep = c.report();
  EXPECT_EQ(rep.failed_units, std::vector<std::int64_t>{0});
  EXPECT_EQ(rep.pixels_failed, 256 * 256);
  EXPECT_EQ(rep.pixels_missing, 256 * 256);
}

TEST(Coordinator, FirstResultWinsAndInvalidResultsAreRejected) {
  FakeClock clock;
  auto c = make(clock);
  const auto l = c.claim("w");
  ASSERT_TRUE(l);
  auto bad = fake_result(l->unit);
  bad.pixels_missing = 1;
  EXPECT_EQ(c.submit(bad), Coordinator::SubmitStatus::kInvalid);
  auto first = fake_result(l->unit);
  first.seconds = 1.0;
  EXPECT_EQ(c.submit(first), Coordinator::SubmitStatus::kAccepted);
  auto second = fake_result(l->unit);
  second.seconds = 2.0;
  EXPECT_EQ(c.submit(second), Coordinator::SubmitStatus::kDuplicate);
  UnitResult unknown;
  unknown.unit_id = 99;
  EXPECT_EQ(c.submit(unknown), Coordinator::SubmitStatus::kUnknownUnit);
  EXPECT_DOUBLE_EQ(c.report().unit_seconds, 1.0);
}

TEST(Coordinator, LateResultFromExpiredLeaseStillCounts) {
  FakeClock clock;
  auto c = make(clock);
  const auto l = c.claim("slow");
  clock.now += 60;
  const auto again = c.claim("fast");
  ASSERT_TRUE(again);
  EXPECT_EQ(again->unit.unit_id, l->unit.unit_id);
  EXPECT_EQ(c.submit(fake_result(l->unit)), Coordinator::SubmitStatus::kAccepted);
  EXPECT_EQ(c.submit(fake_result(again->unit)), Coordinator::SubmitStatus::kDuplicate);
}

TEST(Coordinator, LeaseJsonRoundTrip) {
  FakeClock clock;
  auto c = make(clock);
  const auto l = *c.claim("w");
  const auto back = lease_from_json(nlohmann::json::parse(lease_to_json(l).dump()));
  EXPECT_EQ(back.unit.unit_id, l.unit.unit_id);
  EXPECT_EQ(back.unit.rect, l.unit.rect);
  EXPECT_EQ(back.lease_token, l.lease_token);
  EXPECT_THROW(lease_from_json(nlohmann::json::object()), Error);
}

TEST(CoordinatorHttp, ClaimHeartbeatResultAndCompletion) {
  FakeClock clock;
  auto c = make(clock);
  CoordinatorServer server(c);
  httplib::Client http(server.url());
  const auto job = http.Get("/api/v1/job");
  ASSERT_TRUE(job);
  EXPECT_EQ(nlohmann::json::parse(job->body).at("job_id"), "c");
  EXPECT_EQ(http.Get("/api/v1/models/tiny")->status, 200);
  EXPECT_EQ(http.Get("/api/v1/models/nope")->status, 404);

  std::vector<Lease> leases;
  for (int i = 0; i < 4; ++i) {
    const auto res = http.Post("/api/v1/units/claim", R"({"worker_id":"w"})", "application/json");
    ASSERT_EQ(res->status, 200);
    leases.push_back(lease_from_json(nlohmann::json::parse(res->body)));
  }
  auto none = http.Post("/api/v1/units/claim", "{}", "application/json");
  EXPECT_EQ(none->status, 204);
  EXPECT_EQ(none->get_header_value("X-Job-Complete"), "false");

  EXPECT_EQ(http.Post("/api/v1/units/0/heartbeat", R"({"lease_token":"0:1"})", "application/json")->status, 200);
  EXPECT_EQ(http.Post("/api/v1/units/0/heartbeat", R"({"lease_token":"0:7"})", "application/json")->status, 409);
  EXPECT_EQ(http.Post("/api/v1/units/0/result", "not json", "application/json")->status, 400);
  for (const auto& l : leases) {
    const std::string body =
        ordered_json{{"lease_token", l.lease_token}, {"result", to_json(fake_result(l.unit))}}.dump();
    const auto path = "/api/v1/units/" + std::to_string(l.unit.unit_id) + "/result";
    EXPECT_EQ(http.Post(path, body, "application/json")->status, 200);
  }
  none = http.Post("/api/v1/units/claim", "{}", "application/json");
  EXPECT_EQ(none->status, 204);
  EXPECT_EQ(none->get_header_value("X-Job-Complete"), "true");
  const auto rep = http.Get("/api/v1/jobs/c/report");
  ASSERT_EQ(rep->status, 200);
  const auto j = nlohmann::json::parse(rep->body);
  EXPECT_EQ(j.at("complete"), true);
  EXPECT_EQ(j.at("pixels_scanned"), 512 * 512);
  EXPECT_EQ(http.Get("/api/v1/jobs/other/report")->status, 404);
}

TEST(CoordinatorHttp, KilledWorkerDoesNotChangeOutput) {
  auto text = testing::fixture_job_toml("k", 4, 1, "[0, 0, 768, 768]", 6, "[scan]\nmin_neighbors = 1\n");
  text.replace(text.find("lease_seconds = 5"), 17, "lease_seconds = 1");
  const auto job = parse_job(text);
  const auto local = run_local(job, 1);

  Coordinator c(job, text, {{"tiny", classifier::save_model(testing::tiny_model())}});
  CoordinatorServer server(c);
  std::vector<WorkerSummary> summaries(2);
  {
    std::vector<std::jthread> workers;
    for (int i = 0; i < 2; ++i)
      workers.emplace_back([&, i] {
        WorkerOptions o;
        o.coordinator_url = server.url();
        o.worker_id = "w" + std::to_string(i);
        o.poll_interval_s = 0.05;
        o.kill_after_claims = i == 0 ? 2 : 0;
        summaries[static_cast<std::size_t>(i)] = run_worker(o);
      });
  }
  EXPECT_TRUE(summaries[0].killed);
  EXPECT_EQ(summaries[0].units_completed, 1);
  EXPECT_EQ(summaries[1].units_completed, 8);
  ASSERT_TRUE(c.complete());
  const auto rep = c.report();
  EXPECT_TRUE(rep.failed_units.empty());
  EXPECT_EQ(to_jsonl(rep.candidates), to_jsonl(local.candidates));
  EXPECT_EQ(rep.pixels_scanned, local.pixels_scanned);
}

}  // namespace
}  // namespace facescan::pipeline
