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

// Shared test helpers.

#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "facescan/classifier/model_io.hpp"
#include "facescan/classifier/train.hpp"
#include "facescan/tiles/terrain.hpp"

namespace facescan::testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("facescan_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// A small cascade (about two seconds to train), cached per process. Weak,
/// but deterministic, which is all the plumbing tests need.
inline const classifier::Cascade& tiny_model() {
  static const classifier::Cascade model = [] {
    const auto pos = classifier::generate_face_icons(300, classifier::IconParams::jittered(5));
    const auto pool = tiles::terrain_pool(8, 256);
    classifier::TrainingConfig cfg;
    cfg.feature_pool_size = 1500;
    cfg.max_stages = 4;
    cfg.negatives_per_stage = 600;
    cfg.max_bootstrap_draws = 2'000'000;
    return classifier::train_cascade(pos, pool, cfg);
  }();
  return model;
}

/// tiny_model() saved to disk, for job files.
inline std::string tiny_model_path() {
  static const std::string path = [] {
    const auto p = std::filesystem::temp_directory_path() / ("facescan_test_tiny_model_" + std::to_string(::getpid()) + ".fcc");
    classifier::save_model_file(tiny_model(), p.string());
    return p.string();
  }();
  return path;
}

/// A one-source fixture job over `pixels` (x, y, w, h) scanned by the tiny
/// model. `extra` is appended verbatim (e.g. a [scan] table).
inline std::string fixture_job_toml(const std::string& job_id, int zoom, int unit_size, const std::string& pixels,
                                    int faces, const std::string& extra = "") {
  return "job_id = \"" + job_id + "\"\nzoom = " + std::to_string(zoom) + "\nunit_size = " + std::to_string(unit_size) +
         "\nlease_seconds = 5\n"
         "[[sources]]\nname = \"moon\"\nkind = \"fixture\"\nlayer = \"wac\"\n"
         "[sources.fixture]\nseed = 7\nfaces = " + std::to_string(faces) + "\nface_seed = 3\n"
         "[[regions]]\nsource = \"moon\"\npixels = " + pixels + "\n"
         "[[detectors]]\nid = \"tiny\"\nmodel = \"" + tiny_model_path() + "\"\n"
         "[fetch]\nuse_cache = false\nbackoff_base_s = 0.001\n" + extra;
}

}  // namespace facescan::testing
