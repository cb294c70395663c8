// Copyright 2026 The geomotion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "geomotion/metrics.hpp"
#include "geomotion/providers.hpp"
#include "geomotion/synthscenes.hpp"
#include "geomotion/trainer.hpp"

#include "metric_oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <array>
#include <random>

using namespace geomotion;
using geomotion::testing::random_mask;
using geomotion::testing::rect_mask;
using geomotion::testing::TempDir;
using geomotion::testing::blob_mask;
using geomotion::testing::brute_f;
using geomotion::testing::brute_j;

namespace {

BinaryMask translate(const BinaryMask& m, int dx, int dy, int width, int height) {
  BinaryMask out(width, height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y)) out.at(x + dx, y + dy) = 1;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("region J hand cases") {
  const BinaryMask a = rect_mask(40, 20, 5, 5, 10, 10);
  CHECK(region_j(a, a) == 1.0);
  CHECK(region_j(a, rect_mask(40, 20, 25, 5, 10, 10)) == 0.0);
  CHECK(region_j(a, rect_mask(40, 20, 10, 5, 10, 10)) == doctest::Approx(50.0 / 150.0).epsilon(1e-15));
  CHECK(region_j(BinaryMask(8, 8), BinaryMask(8, 8)) == 1.0);
  CHECK_THROWS_AS(region_j(BinaryMask(8, 8), BinaryMask(8, 9)), ShapeError);
}

TEST_CASE("region J equals a brute-force pixel scan") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const BinaryMask p = i % 2 ? random_mask(rng, 32, 32, 0.3) : blob_mask(rng, 32);
    const BinaryMask g = i % 2 ? random_mask(rng, 32, 32, 0.3) : blob_mask(rng, 32);
    CHECK(region_j(p, g) == brute_j(p, g));
  }
}

TEST_CASE("boundary F hand cases") {
  const BinaryMask square = rect_mask(32, 32, 8, 8, 8, 8);
  CHECK(boundary_f(square, square, 0) == 1.0);
  CHECK(boundary_f(square, rect_mask(32, 32, 9, 8, 8, 8), 1) == 1.0);
  CHECK(boundary_f(square, rect_mask(32, 32, 9, 8, 8, 8), 0) < 1.0);
  CHECK(boundary_f(rect_mask(32, 32, 0, 0, 4, 4), rect_mask(32, 32, 20, 20, 4, 4), 2) == 0.0);
  CHECK(boundary_f(BinaryMask(8, 8), BinaryMask(8, 8), 1) == 1.0);
  CHECK(boundary_f(square, BinaryMask(32, 32), 1) == 0.0);
  CHECK_THROWS_AS(boundary_f(square, square, -1), ConfigError);
  CHECK_THROWS_AS(boundary_f(square, BinaryMask(16, 32), 1), ShapeError);
}

TEST_CASE("boundary map marks foreground pixels touching background or the border") {
  const BinaryMask full(4, 4, 1);
  BinaryMask expected(4, 4, 1);
  expected.at(1, 1) = 0;
  expected.at(2, 1) = 0;
  expected.at(1, 2) = 0;
  expected.at(2, 2) = 0;
  CHECK(boundary_map(full) == expected);
}

TEST_CASE("boundary F matches all-pairs distance matching") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    const BinaryMask p = i % 2 ? random_mask(rng, 32, 32, 0.3) : blob_mask(rng, 32);
    const BinaryMask g = i % 2 ? random_mask(rng, 32, 32, 0.3) : blob_mask(rng, 32);
    for (int tol : {0, 1, 2, 3}) {
      CHECK(std::abs(boundary_f(p, g, tol) - brute_f(p, g, tol)) < 1e-9);
    }
  }
}

TEST_CASE("J and F are symmetric and translation invariant") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 20; ++i) {
    const BinaryMask p = blob_mask(rng, 24);
    const BinaryMask g = blob_mask(rng, 24);
    CHECK(region_j(p, g) == region_j(g, p));
    CHECK(boundary_f(p, g, 1) == doctest::Approx(boundary_f(g, p, 1)).epsilon(1e-15));
    // Padding keeps the shifted masks away from the border.
    const BinaryMask pp = translate(p, 5, 3, 40, 40);
    const BinaryMask gp = translate(g, 5, 3, 40, 40);
    const BinaryMask ps = translate(p, 11, 9, 40, 40);
    const BinaryMask gs = translate(g, 11, 9, 40, 40);
    CHECK(region_j(pp, gp) == region_j(ps, gs));
    CHECK(boundary_f(pp, gp, 2) == boundary_f(ps, gs, 2));
  }
}

TEST_CASE("region recall counts frames strictly above one half") {
  const std::vector<double> js = {0.6, 0.4, 0.7, 0.51};
  CHECK(region_recall(js) == 0.75);
  const std::vector<double> edge = {0.5, 0.5000001};
  CHECK(region_recall(edge) == 0.5);
  CHECK(region_recall(std::vector<double>{}) == 0.0);
}

TEST_CASE("default boundary tolerance") {
  CHECK(default_boundary_tolerance(32, 32) == 1);
  CHECK(default_boundary_tolerance(64, 64) == 1);
  CHECK(default_boundary_tolerance(854, 480) == 8);
}

TEST_CASE("dataset aggregation uses sequence means for J_M and frames for J_R") {
  SequenceScore a;
  a.name = "a";
  a.j = {0.8, 0.8};
  a.f = {0.5, 0.7};
  SequenceScore b;
  b.name = "b";
  b.j = {0.6, 0.6, 0.6, 0.6};
  b.f = {0.4, 0.4, 0.4, 0.4};
  const SegReport report = aggregate({a, b});
  CHECK(report.j_m == doctest::Approx(0.7));
  CHECK(report.f_m == doctest::Approx(0.5));
  CHECK(report.j_and_f == doctest::Approx(0.6));
  CHECK(report.j_r == 1.0);
  CHECK(report.frames == 6);
  CHECK(a.j_mean() == doctest::Approx(0.8));
}

TEST_CASE("scores stay within the unit interval") {
  std::mt19937_64 rng(14);
  std::vector<BinaryMask> preds;
  std::vector<BinaryMask> gts;
  for (int i = 0; i < 10; ++i) {
    preds.push_back(random_mask(rng, 16, 16, 0.2 * (i % 5)));
    gts.push_back(blob_mask(rng, 16));
  }
  const SequenceScore s = score_sequence("s", preds, gts);
  const SegReport r = aggregate({s});
  for (std::size_t i = 0; i < s.j.size(); ++i) {
    CHECK(s.j[i] >= 0.0);
    CHECK(s.j[i] <= 1.0);
    CHECK(s.f[i] >= 0.0);
    CHECK(s.f[i] <= 1.0);
  }
  for (double v : {r.j_m, r.f_m, r.j_and_f, r.j_r}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  preds.pop_back();
  CHECK_THROWS_AS(score_sequence("s", preds, gts), DataError);
}

TEST_CASE("evaluate_dataset on directories") {
  TempDir tmp("metrics");
  std::mt19937_64 rng(15);
  for (const std::string name : {"seq_a", "seq_b"}) {
    fs::create_directories(tmp / "gt" / name / "masks");
    fs::create_directories(tmp / "pred" / name);
    for (std::size_t t = 0; t < 3; ++t) {
      const BinaryMask m = blob_mask(rng, 24);
      write_mask_png(m, tmp / "gt" / name / "masks" / (frame_stem(t) + ".png"));
      GrayImage prob(24, 24);
      for (std::size_t i = 0; i < m.values.size(); ++i) prob.pixels[i] = m.values[i] ? 200 : 30;
      write_gray_png(prob, tmp / "pred" / name / (frame_stem(t) + ".png"));
    }
  }

  SUBCASE("perfect predictions") {
    const SegReport r = evaluate_dataset(tmp / "pred", tmp / "gt");
    CHECK(r.j_m == 1.0);
    CHECK(r.f_m == 1.0);
    CHECK(r.j_and_f == 1.0);
    CHECK(r.j_r == 1.0);
    CHECK(r.frames == 6);
    const json doc = report_to_json(r);
    CHECK(doc["J_M"].get<double>() == 1.0);
    CHECK(doc["sequences"].size() == 2);
    write_report_csv(r, tmp / "report.csv");
    CHECK(fs::file_size(tmp / "report.csv") > 0);
  }
  SUBCASE("a high threshold empties every prediction") {
    const SegReport r = evaluate_dataset(tmp / "pred", tmp / "gt", 0.9);
    CHECK(r.j_m < 1.0);
  }
  SUBCASE("missing frames are itemized") {
    fs::remove(tmp / "pred" / "seq_a" / (frame_stem(1) + ".png"));
    fs::remove(tmp / "pred" / "seq_b" / (frame_stem(2) + ".png"));
    const std::string first = "seq_a/" + frame_stem(1) + ".png";
    const std::string second = "seq_b/" + frame_stem(2) + ".png";
    CHECK_THROWS_WITH_AS(evaluate_dataset(tmp / "pred", tmp / "gt"), doctest::Contains(first.c_str()), DataError);
    CHECK_THROWS_WITH_AS(evaluate_dataset(tmp / "pred", tmp / "gt"), doctest::Contains(second.c_str()), DataError);
  }
  SUBCASE("mismatched shapes") {
    write_gray_png(GrayImage(12, 24), tmp / "pred" / "seq_a" / (frame_stem(0) + ".png"));
    CHECK_THROWS_AS(evaluate_dataset(tmp / "pred", tmp / "gt"), ShapeError);
  }
  SUBCASE("missing directories") {
    CHECK_THROWS_AS(evaluate_dataset(tmp / "nope", tmp / "gt"), DataError);
    CHECK_THROWS_AS(evaluate_dataset(tmp / "pred", tmp / "nope"), DataError);
  }
}

TEST_CASE("median runtime of a single repetition is that measurement") {
  int calls = 0;
  const double v = median_seconds_per_frame([&] { ++calls; }, 4, 1);
  CHECK(calls == 1);
  CHECK(v >= 0.0);
  CHECK_THROWS(median_seconds_per_frame([] {}, 0, 1));
}

TEST_CASE("toy model inference stays within the per-frame budget") {
  ModelConfig cfg;
  const MotionModel<float> model(cfg, 0);
  SceneConfig scene;
  scene.frames = 16;
  const SyntheticSequence synth = generate_sequence(scene, 3);
  const GeometryBundle bundle =
      provide(synth.sequence, ProviderSpec{}, cfg.grid(), cfg.channels, cfg.cam_width);
  const double per_frame = median_seconds_per_frame(
      [&] { (void)predict_sequence(model, synth.sequence, bundle); }, synth.sequence.frames.size(), 3);
  MESSAGE("seconds per frame: " << per_frame);
  CHECK(per_frame < 0.05);
}
