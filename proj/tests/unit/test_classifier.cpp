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

#include "facescan/classifier/model_io.hpp"
#include "facescan/classifier/train.hpp"
#include "facescan/tiles/terrain.hpp"
#include "support.hpp"

namespace facescan::classifier {
namespace {

TEST(Features, ExhaustiveHaarCountMatchesClosedForm) {
  // Oracle: per kind, (#placements of cell widths) x (#placements of cell heights).
  std::size_t expected = 0;
  for (auto [cols, rows] : {std::pair{2, 1}, {1, 2}, {3, 1}, {1, 3}, {2, 2}}) {
    std::size_t wx = 0, hy = 0;
    for (int cw = 1; cw * cols <= 24; ++cw) wx += static_cast<std::size_t>(24 - cw * cols + 1);
    for (int ch = 1; ch * rows <= 24; ++ch) hy += static_cast<std::size_t>(24 - ch * rows + 1);
    expected += wx * hy;
  }
  const auto all = all_haar_features(24);
  EXPECT_EQ(all.size(), expected);
  EXPECT_EQ(all.size(), 162336u);
  for (const auto& f : all) ASSERT_TRUE(f.valid());
}

TEST(Features, PoolsAreSeededAndSized) {
  const auto a = feature_pool(FeatureFamily::kHaar, 500, 3);
  const auto b = feature_pool(FeatureFamily::kHaar, 500, 3);
  EXPECT_EQ(a.size(), 500u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, feature_pool(FeatureFamily::kHaar, 500, 4));
  const auto bbf = feature_pool(FeatureFamily::kBBF, 300, 3);
  EXPECT_EQ(bbf.size(), 300u);
  for (const auto& f : bbf) EXPECT_TRUE(std::get<BBFFeature>(f).valid());
}

TEST(Icons, GenerationIsDeterministic) {
  const auto a = generate_face_icons(20, IconParams::standard(9));
  const auto b = generate_face_icons(20, IconParams::standard(9));
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].window, b[i].window);
    EXPECT_EQ(a[i].window.width(), kBaseWindow);
    EXPECT_EQ(a[i].label, 1);
  }
}

TEST(Icons, EyesAreInkOnBackground) {
  Rng rng(4);
  auto p = IconParams::standard(4);
  p.noise_stddev = {0.0, 0.0};
  for (int i = 0; i < 20; ++i) {
    const auto ic = draw_icon_instance(rng, p);
    const auto img = render_icon(ic, 96);
    for (const auto& [ex, ey] : ic.eye_centers(96))
      EXPECT_LT(img.at(static_cast<int>(ex), static_cast<int>(ey)), ic.background - 0.5 * (ic.background - ic.ink));
    EXPECT_NEAR(img.at(1, 1), ic.background, 1.0);  // corner is background
  }
}

TEST(Icons, InvalidParamsRejected) {
  auto p = IconParams::standard();
  p.face_radius = {0.2, 0.6};
  EXPECT_THROW(p.validate(), Error);
  p = IconParams::standard();
  p.zoom = {0.0, 1.0};
  EXPECT_THROW(p.validate(), Error);
  p = IconParams::standard();
  p.contrast = {5.0, 1.0};
  EXPECT_THROW(p.validate(), Error);
}

TEST(ModelIo, RoundTripIsExact) {
  const auto& m = testing::tiny_model();
  const auto text = save_model(m);
  const auto back = load_model(text);
  EXPECT_EQ(back, m);
  EXPECT_EQ(save_model(back), text);
}

TEST(ModelIo, RejectsDamagedModels) {
  const auto text = save_model(testing::tiny_model());
  EXPECT_THROW(load_model(""), Error);
  EXPECT_THROW(load_model("NOT-A-MODEL 1\n"), Error);
  EXPECT_THROW(load_model(text.substr(0, text.size() / 2)), Error);
}

TEST(Cascade, ClassifyAgreesWithStageSums) {
  const auto& m = testing::tiny_model();
  const auto icons = generate_face_icons(50, IconParams::jittered(77));
  for (const auto& s : icons) {
    const auto patch = prepare_patch(s.window);
    bool accepted = true;
    int evaluated = 0;
    for (const auto& st : m.stages) {
      ++evaluated;
      if (stage_sum(st, patch.ii, patch.inv_stddev) < st.threshold) {
        accepted = false;
        break;
      }
    }
    const auto r = classify_window(m, patch.ii, 0, 0, 1.0, patch.inv_stddev);
    EXPECT_EQ(r.accepted, accepted);
    EXPECT_EQ(r.stages_evaluated, evaluated);
  }
}

TEST(Training, TinyCascadeDetectsFreshIconsAndRejectsTerrain) {
  const auto& m = testing::tiny_model();
  EXPECT_GE(m.stages.size(), 1u);
  EXPECT_LE(m.stages.size(), 4u);
  const auto icons = generate_face_icons(400, IconParams::jittered(1234));
  int hits = 0;
  for (const auto& s : icons) {
    const auto p = prepare_patch(s.window);
    hits += classify_window(m, p.ii, 0, 0, 1.0, p.inv_stddev).accepted ? 1 : 0;
  }
  EXPECT_GE(hits, 360);  // d_min 0.995 per stage over <= 4 stages, minus generalization slack
  const auto terrain = tiles::terrain_pool(1, 256, 99999);
  const auto negs = sample_negatives(terrain, 2000, 5);
  int fp = 0;
  for (const auto& s : negs) {
    const auto p = prepare_patch(s.window);
    fp += classify_window(m, p.ii, 0, 0, 1.0, p.inv_stddev).accepted ? 1 : 0;
  }
  EXPECT_LT(fp, 200);
}

TEST(Training, IsDeterministic) {
  const auto pos = generate_face_icons(120, IconParams::standard(3));
  const auto pool = tiles::terrain_pool(2, 128);
  TrainingConfig cfg;
  cfg.feature_pool_size = 400;
  cfg.max_stages = 2;
  cfg.negatives_per_stage = 200;
  cfg.max_bootstrap_draws = 200000;
  EXPECT_EQ(train_cascade(pos, pool, cfg), train_cascade(pos, pool, cfg));
}

TEST(Training, ExtraNegativesMustBeBaseWindow) {
  const auto pos = generate_face_icons(50, IconParams::standard(3));
  TrainingConfig cfg;
  cfg.feature_pool_size = 100;
  cfg.max_stages = 1;
  EXPECT_THROW(train_cascade(pos, tiles::terrain_pool(1, 128), cfg, {GrayImage(30, 30)}), Error);
}

TEST(Training, ExtraNegativesAreLearned) {
  // Mouthless look-alikes in the negative set must end up mostly rejected.
  std::vector<GrayImage> extra;
  for (std::uint64_t s = 0; s < 60; ++s) extra.push_back(tiles::render_plant({tiles::PlantKind::kDecoy, 0, 0, kBaseWindow, s}));
  const auto pos = generate_face_icons(300, IconParams::jittered(5));
  const auto pool = tiles::terrain_pool(8, 256);
  TrainingConfig cfg;
  cfg.feature_pool_size = 1500;
  cfg.max_stages = 4;
  cfg.negatives_per_stage = 600;
  cfg.max_bootstrap_draws = 2'000'000;
  const auto with = train_cascade(pos, pool, cfg, extra);
  const auto count = [&](const Cascade& c) {
    int n = 0;
    for (const auto& g : extra) {
      const auto p = prepare_patch(g);
      n += classify_window(c, p.ii, 0, 0, 1.0, p.inv_stddev).accepted ? 1 : 0;
    }
    return n;
  };
  EXPECT_LT(count(with), count(testing::tiny_model()));
}

}  // namespace
}  // namespace facescan::classifier
