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

// facescan command-line tool.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>

#include "facescan/classifier/model_io.hpp"
#include "facescan/classifier/train.hpp"
#include "facescan/pipeline/coordinator.hpp"
#include "facescan/pipeline/execute.hpp"
#include "facescan/service/server.hpp"
#include "facescan/tiles/terrain.hpp"

namespace fs = std::filesystem;
using namespace facescan;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::kInvalidArgument, "bind address must be HOST:PORT");
  return {bind.substr(0, colon), static_cast<int>(parse_int(bind.substr(colon + 1)))};
}

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

void log_line(const std::string& m) { std::cerr << m << "\n"; }

struct TrainArgs {
  std::string out = "model.fcc";
  int positives = 2000;
  std::string icon_style = "jittered";
  std::uint64_t seed = 1;
  std::string family = "haar";
  std::size_t features = 20000;
  int stages = 10;
  double d_min = 0.995;
  double f_max = 0.4;
  std::size_t negatives = 10000;
  std::uint64_t draws = 100'000'000;
  int pool_images = 128;
  int pool_size = 512;
  std::string backgrounds;
  std::vector<std::string> extra_negatives;
  unsigned threads = 1;
};

int cmd_train(const TrainArgs& a) {
  classifier::IconParams icons = a.icon_style == "standard"   ? classifier::IconParams::standard(a.seed + 10)
                                 : a.icon_style == "stylized" ? classifier::IconParams::stylized(a.seed + 10)
                                                              : classifier::IconParams::jittered(a.seed + 10);
  const auto positives = classifier::generate_face_icons(a.positives, icons);

  std::vector<GrayImage> pool;
  if (!a.backgrounds.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.backgrounds))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) pool.push_back(tiles::read_image_file(f.string()));
  } else {
    pool = tiles::terrain_pool(a.pool_images, a.pool_size);
  }

  std::vector<GrayImage> extra;
  for (const auto& dir : a.extra_negatives) {
    auto patches = service::read_export(dir);
    extra.insert(extra.end(), std::make_move_iterator(patches.begin()), std::make_move_iterator(patches.end()));
  }

  classifier::TrainingConfig cfg;
  cfg.family = classifier::feature_family_from_string(a.family);
  cfg.feature_pool_size = a.features;
  cfg.seed = a.seed;
  cfg.max_stages = a.stages;
  cfg.targets.d_min = a.d_min;
  cfg.targets.f_max = a.f_max;
  cfg.negatives_per_stage = a.negatives;
  cfg.max_bootstrap_draws = a.draws;
  cfg.threads = a.threads;
  classifier::TrainingReport rep;
  const auto cascade = classifier::train_cascade(positives, pool, cfg, extra, &rep, log_line);
  classifier::save_model_file(cascade, a.out);
  std::cout << "stages " << cascade.stages.size() << ", bootstrap fpr " << format_double(rep.cumulative_fpr)
            << ", stop: " << rep.stop_reason << "\nwrote " << a.out << "\n";
  return 0;
}

void write_outputs(const pipeline::JobReport& rep, const std::string& out, const std::string& report_path) {
  if (!out.empty()) pipeline::write_text_file(out, pipeline::to_jsonl(rep.candidates));
  const std::string report = pipeline::to_json(rep).dump(2) + "\n";
  if (!report_path.empty())
    pipeline::write_text_file(report_path, report);
  else
    std::cout << report;
}

int cmd_scan(const std::string& job_path, unsigned workers, const std::string& out, const std::string& report) {
  const auto job = pipeline::load_job_file(job_path);
  pipeline::LocalRunOptions opts;
  opts.workers = workers;
  opts.on_unit = [](const pipeline::WorkUnit& u, const pipeline::UnitResult* r, const std::string& err) {
    if (r)
      std::cerr << "unit " << u.unit_id << ": " << r->candidates.size() << " candidates\n";
    else
      std::cerr << "unit " << u.unit_id << " failed: " << err << "\n";
  };
  const auto rep = pipeline::run_local(job, job.load_detectors(), opts);
  write_outputs(rep, out, report);
  return rep.failed_units.empty() ? 0 : 3;
}

int cmd_coordinator(const std::string& job_path, const std::string& bind, const std::string& out,
                    const std::string& report, bool linger) {
  auto coord = pipeline::make_coordinator(job_path);
  const auto [host, port] = parse_bind(bind);
  pipeline::CoordinatorServer server(*coord, host, port);
  std::cerr << "coordinating " << coord->job().job_id << " (" << coord->units().size() << " units) on "
            << server.url() << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop && !coord->wait_complete(0.5)) {
  }
  const auto rep = coord->report();
  write_outputs(rep, out, report);
  if (linger && !g_stop) wait_for_signal();
  return rep.complete() && rep.failed_units.empty() ? 0 : 3;
}

int cmd_worker(pipeline::WorkerOptions opts) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  opts.stop = &g_stop;
  const auto s = pipeline::run_worker(opts);
  std::cerr << opts.worker_id << ": " << s.units_completed << " units done, " << s.units_failed << " failed"
            << (s.killed ? " (killed)" : "") << "\n";
  return s.killed ? 137 : 0;
}

int cmd_report(const std::string& url, const std::string& job_id, bool candidates) {
  httplib::Client c(url);
  const auto path = "/api/v1/jobs/" + job_id + (candidates ? "/candidates" : "/report");
  const auto res = c.Get(path);
  if (!res) fail(ErrorCode::kTransient, "coordinator unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) fail(ErrorCode::kNotFound, path + ": HTTP " + std::to_string(res->status));
  std::cout << (candidates ? res->body : nlohmann::json::parse(res->body).dump(2) + "\n");
  return 0;
}

int cmd_serve(const std::string& store_dir, const std::string& bind, const std::string& static_dir) {
  service::Store store(store_dir);
  const auto [host, port] = parse_bind(bind);
  service::ReviewServer server(store, host, port, static_dir);
  std::cerr << "serving " << store.size() << " candidates on " << server.url() << "\n";
  wait_for_signal();
  return 0;
}

int cmd_ingest(const std::string& store_dir, const std::string& candidates, const std::string& job_path) {
  const auto job = pipeline::load_job_file(job_path);
  const auto fetchers = pipeline::make_fetchers(job);
  std::map<std::pair<geo::BodyName, std::string>, std::shared_ptr<tiles::TileFetcher>> by_layer;
  for (std::size_t i = 0; i < job.sources.size(); ++i)
    by_layer[{job.sources[i].spec.body, job.sources[i].spec.layer}] = fetchers[i];
  service::Store store(store_dir);
  const auto n = store.ingest(pipeline::parse_jsonl(pipeline::read_text_file(candidates)),
                              service::fetcher_thumbnails(std::move(by_layer)));
  std::cout << n << " new candidates (" << store.size() << " total)\n";
  return 0;
}

int cmd_export(const std::string& store_dir, const std::string& out, service::ExportOptions opts) {
  const service::Store store(store_dir);
  const auto e = store.export_hard_negatives(opts);
  service::write_export(e, out);
  std::cout << e.patches.size() << " patches from " << e.candidates << " candidates -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facescan: face-like structure detection on planetary imagery"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a cascade on synthetic icons and terrain backgrounds");
  t->add_option("-o,--out", train.out, "Model output path");
  t->add_option("--positives", train.positives, "Synthetic positive icons")->check(CLI::Range(10, 1000000));
  t->add_option("--icons", train.icon_style, "Icon style")->check(CLI::IsMember({"standard", "jittered", "stylized"}));
  t->add_option("--seed", train.seed);
  t->add_option("--family", train.family, "Feature family")->check(CLI::IsMember({"haar", "bbf"}));
  t->add_option("--features", train.features, "Candidate feature pool size");
  t->add_option("--stages", train.stages, "Maximum cascade stages");
  t->add_option("--d-min", train.d_min, "Per-stage detection rate on held-out positives")->check(CLI::Range(0.5, 1.0));
  t->add_option("--f-max", train.f_max, "Per-stage false-positive rate")->check(CLI::Range(0.01, 0.99));
  t->add_option("--negatives", train.negatives, "Negatives per stage");
  t->add_option("--draws", train.draws, "Bootstrap draw budget");
  t->add_option("--pool-images", train.pool_images, "Procedural background images");
  t->add_option("--pool-size", train.pool_size, "Background image side");
  t->add_option("--backgrounds", train.backgrounds, "Directory of face-free background images (replaces the procedural pool)");
  t->add_option("--extra-negatives", train.extra_negatives, "Hard-negative export directory (repeatable)");
  t->add_option("--threads", train.threads);

  std::string job_path, out, report;
  unsigned workers = 1;
  auto* s = app.add_subcommand("scan", "Run a scan job locally");
  s->add_option("job", job_path, "Job TOML")->required()->check(CLI::ExistingFile);
  s->add_option("-w,--workers", workers)->check(CLI::Range(1, 256));
  s->add_option("-o,--out", out, "Candidate JSON-lines output");
  s->add_option("--report", report, "Report JSON output (default: stdout)");

  std::string bind = "127.0.0.1:8080";
  bool linger = false;
  auto* c = app.add_subcommand("coordinator", "Lease a job's units to workers");
  c->add_option("job", job_path, "Job TOML")->required()->check(CLI::ExistingFile);
  c->add_option("--bind", bind);
  c->add_option("-o,--out", out, "Candidate JSON-lines output");
  c->add_option("--report", report, "Report JSON output (default: stdout)");
  c->add_flag("--linger", linger, "Keep serving after completion until interrupted");

  pipeline::WorkerOptions wopts;
  auto* w = app.add_subcommand("worker", "Process units from a coordinator");
  w->add_option("coordinator", wopts.coordinator_url, "Coordinator URL")->required();
  w->add_option("--id", wopts.worker_id);
  w->add_option("--poll", wopts.poll_interval_s, "Idle poll interval (s)");
  w->add_option("--kill-after", wopts.kill_after_claims, "Abandon the n-th claimed unit and exit (fault injection)");

  std::string url, job_id;
  bool want_candidates = false;
  auto* r = app.add_subcommand("report", "Fetch a job report from a coordinator");
  r->add_option("coordinator", url)->required();
  r->add_option("job_id", job_id)->required();
  r->add_flag("--candidates", want_candidates, "Fetch the candidate file instead");

  std::string store_dir, static_dir, candidates;
  auto* sv = app.add_subcommand("serve", "Serve the review API");
  sv->add_option("--store", store_dir)->required();
  sv->add_option("--bind", bind);
  sv->add_option("--static", static_dir, "Review UI bundle directory")->check(CLI::ExistingDirectory);

  auto* in = app.add_subcommand("ingest", "Add candidates and thumbnails to a review store");
  in->add_option("--store", store_dir)->required();
  in->add_option("--candidates", candidates)->required()->check(CLI::ExistingFile);
  in->add_option("--job", job_path, "Job TOML naming the tile sources")->required()->check(CLI::ExistingFile);

  service::ExportOptions eopts;
  bool no_jitter = false;
  auto* ex = app.add_subcommand("export-negatives", "Export voted-down candidates as training patches");
  ex->add_option("--store", store_dir)->required();
  ex->add_option("-o,--out", out)->required();
  ex->add_option("--min-not-face", eopts.min_not_face);
  ex->add_option("--max-face", eopts.max_face);
  ex->add_flag("--no-jitter", no_jitter, "Only the exact box, no shifted/scaled variants");

  CLI11_PARSE(app, argc, argv);
  eopts.jitter = !no_jitter;

  try {
    if (*t) return cmd_train(train);
    if (*s) return cmd_scan(job_path, workers, out, report);
    if (*c) return cmd_coordinator(job_path, bind, out, report, linger);
    if (*w) return cmd_worker(wopts);
    if (*r) return cmd_report(url, job_id, want_candidates);
    if (*sv) return cmd_serve(store_dir, bind, static_dir);
    if (*in) return cmd_ingest(store_dir, candidates, job_path);
    if (*ex) return cmd_export(store_dir, out, eopts);
  } catch (const std::exception& e) {
    std::cerr << "facescan: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
