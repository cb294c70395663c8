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


#include "geomotion/synthscenes.hpp"
#include "geomotion/trainer.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

using namespace geomotion;
using geomotion::testing::TempDir;
using geomotion::testing::tiny_model;

namespace {

TrainingSet tiny_set(std::size_t count, std::uint64_t seed, int frames = 6) {
  SceneConfig scene;
  scene.height = 16;
  scene.width = 16;
  scene.frames = frames;
  scene.object_count = 1;
  scene.min_size = 4;
  scene.max_size = 7;
  std::vector<FrameSequence> sequences;
  for (auto& s : generate_suite(scene, count, seed)) sequences.push_back(std::move(s.sequence));
  return prepare_training_set(std::move(sequences), ProviderSpec{}, tiny_model());
}

TrainConfig tiny_train(int epochs) {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.epochs = epochs;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  return cfg;
}

bool same_params(const MotionModel<float>& a, const MotionModel<float>& b) {
  auto ia = a.params().begin();
  for (auto ib = b.params().begin(); ib != b.params().end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.value != ib->second.value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("sample_frames stride and wraparound") {
  const auto long_seq = sample_frames(97, 16);
  REQUIRE(long_seq.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(long_seq[i] == 6 * i);

  const auto dense = sample_frames(16, 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(dense[i] == i);

  const auto wrapped = sample_frames(8, 16);
  REQUIRE(wrapped.size() == 16);
  std::vector<int> hits(8, 0);
  for (auto i : wrapped) ++hits[i];
  for (int h : hits) CHECK(h == 2);

  const auto shifted = sample_frames(97, 16, 3);
  CHECK(shifted.front() == 3);
  CHECK(shifted[1] == 9);
  CHECK(sample_frames(97, 16, 3) == shifted);
  CHECK_THROWS_AS(sample_frames(0, 16), DataError);
}

TEST_CASE("sampled indices stay in range") {
  for (std::size_t length = 2; length < 60; ++length) {
    for (std::size_t phase = 0; phase < 5; ++phase) {
      const auto idx = sample_frames(length, 16, phase);
      CHECK(idx.size() == 16);
      for (auto i : idx) CHECK(i < length);
    }
  }
}

TEST_CASE("Adam follows the reference update on a 1-D quadratic") {
  ParamStore<float> params;
  params.add("x", {1}).value[0] = 1.0f;
  Adam adam(0.1, 0.9, 0.999, 1e-8);

  // Worked by hand for f(x) = x^2, x0 = 1, lr 0.1.
  const double hand[3] = {0.9, 0.8004121, 0.7015870};
  // Hand-rolled reference.
  double x = 1.0;
  double m = 0.0;
  double v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    x -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);

    params.grad_vec("x")[0] = 2.0f * params.vec("x")[0];
    adam.step(params);
    CHECK(params.vec("x")[0] == doctest::Approx(x).epsilon(1e-5));
    CHECK(x == doctest::Approx(hand[t - 1]).epsilon(1e-5));
  }
  CHECK(adam.steps() == 3);
}

TEST_CASE("gradient clipping rescales to the global norm") {
  ParamStore<float> params;
  params.add("a", {2}).grad << 3.0f, 0.0f;
  params.add("b", {1}).grad << 4.0f;
  CHECK(clip_gradients(params, 1.0) == doctest::Approx(5.0));
  CHECK(params.grad_vec("a")[0] == doctest::Approx(0.6));
  CHECK(params.grad_vec("b")[0] == doctest::Approx(0.8));
  CHECK(clip_gradients(params, 0.0) == doctest::Approx(1.0));
  CHECK(params.grad_vec("b")[0] == doctest::Approx(0.8));
}

TEST_CASE("a vanishing learning rate freezes the loss trajectory") {
  const TrainingSet data = tiny_set(1, 0, 4);
  TrainConfig cfg = tiny_train(5);
  // One sequence of four frames: every step sees the same batch.
  cfg.learning_rate = 1e-30;
  const TrainReport r = Trainer(cfg, data).run();
  REQUIRE(r.losses.size() == 5);
  for (double l : r.losses) CHECK(l == r.losses.front());
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(Trainer(cfg, data), ConfigError);
}

TEST_CASE("same seed gives bitwise-identical trajectories") {
  const TrainingSet data = tiny_set(3, 1);
  const TrainConfig cfg = tiny_train(3);
  Trainer a(cfg, data);
  Trainer b(cfg, data);
  const TrainReport ra = a.run();
  const TrainReport rb = b.run();
  CHECK(ra.losses.size() == 9);
  CHECK(ra.losses == rb.losses);
  CHECK(same_params(a.model(), b.model()));
  for (double l : ra.losses) CHECK(std::isfinite(l));

  TrainConfig other = cfg;
  other.seed = 4;
  CHECK(Trainer(other, data).run().losses != ra.losses);
}

TEST_CASE("training lowers the loss") {
  const TrainingSet data = tiny_set(2, 2);
  TrainConfig cfg = tiny_train(30);
  const TrainReport r = Trainer(cfg, data).run();
  const double head = (r.losses[0] + r.losses[1]) / 2;
  const double tail = (r.losses[r.losses.size() - 1] + r.losses[r.losses.size() - 2]) / 2;
  CHECK(tail < head);
}

TEST_CASE("a non-finite loss aborts with the step index") {
  const TrainingSet data = tiny_set(1, 0);
  Trainer trainer(tiny_train(2), data);
  trainer.model().params().at("fusion.out.weight").value.setConstant(std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_WITH_AS(trainer.run(), doctest::Contains("step 1"), NumericError);
}

TEST_CASE("checkpoint save, load and continue matches an uninterrupted run") {
  TempDir tmp("trainer");
  const TrainingSet data = tiny_set(3, 5);

  Trainer full(tiny_train(2), data);
  const TrainReport uninterrupted = full.run();

  TrainConfig first = tiny_train(1);
  first.output_dir = tmp / "first";
  Trainer half(first, data);
  const TrainReport r1 = half.run();
  CHECK(fs::exists(r1.checkpoint));
  CHECK(fs::exists(tmp / "first" / "loss.csv"));

  Trainer resumed(tiny_train(2), data);
  resumed.restore(load_checkpoint(r1.checkpoint));
  const TrainReport r2 = resumed.run();
  CHECK(r2.losses == uninterrupted.losses);
  CHECK(r2.epochs == 2);
  CHECK(same_params(resumed.model(), full.model()));

  Checkpoint plain = model_checkpoint(full.model());
  CHECK_THROWS_AS(resumed.restore(plain), FormatError);
}

TEST_CASE("max_steps stops mid-epoch") {
  const TrainingSet data = tiny_set(3, 6);
  TrainConfig cfg = tiny_train(10);
  cfg.max_steps = 4;
  const TrainReport r = Trainer(cfg, data).run();
  CHECK(r.steps == 4);
  CHECK(r.epochs == 1);
}

TEST_CASE("provider outputs stay outside the optimized parameters") {
  const TrainingSet data = tiny_set(2, 7);
  const TrainingSet before = data;
  Trainer trainer(tiny_train(3), data);
  trainer.run();
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(data.bundles[i].geo_low == before.bundles[i].geo_low);
    CHECK(data.bundles[i].geo_high == before.bundles[i].geo_high);
    CHECK(data.bundles[i].cam == before.bundles[i].cam);
    const GeometryBundle again = provide(data.sequences[i], ProviderSpec{}, tiny_model().grid(), 4, 4);
    CHECK(again.geo_low == data.bundles[i].geo_low);
  }

  // Every trainable parameter belongs to the flow encoder, the fusion block or the decoder.
  ParamStore<float> expected;
  std::mt19937_64 rng(0);
  const ModelConfig mc = tiny_model();
  init_flow_encoder(expected, mc.flow_width, rng);
  init_fusion(expected, mc.channels, mc.flow_width, mc.cam_width, rng);
  init_decoder(expected, mc.decoder(), rng);
  std::vector<std::string> want;
  std::vector<std::string> got;
  for (const auto& [name, t] : expected) want.push_back(name);
  for (const auto& [name, t] : trainer.model().params()) got.push_back(name);
  CHECK(got == want);
}

TEST_CASE("held-out evaluation and target tracking") {
  const TrainingSet train = tiny_set(2, 8);
  const TrainingSet heldout = tiny_set(2, 9);
  TrainConfig cfg = tiny_train(2);
  cfg.eval_every = 2;
  cfg.target_jm = 1e-9;
  cfg.stop_at_target = true;
  const TrainReport r = Trainer(cfg, train, &heldout).run();
  REQUIRE(!r.evals.empty());
  CHECK(r.evals.front().step == 0);
  REQUIRE(r.heldout.has_value());
  for (const auto& e : r.evals) {
    CHECK(e.j_m >= 0.0);
    CHECK(e.j_m <= 1.0);
  }
  if (r.evals.front().j_m >= cfg.target_jm) {
    CHECK(r.steps_to_target == 0);
    CHECK(r.steps == 0);
  }
}

TEST_CASE("init experiment") {
  TempDir tmp("init");
  const TrainingSet train = tiny_set(2, 10);
  const TrainingSet heldout = tiny_set(1, 11);
  TrainConfig cfg = tiny_train(2);
  cfg.eval_every = 2;

  SUBCASE("starting from the random-init weights reproduces the random curve") {
    save_checkpoint(model_checkpoint(MotionModel<float>(cfg.model, cfg.seed)), tmp / "init");
    const InitComparison c = init_experiment(cfg, train, heldout, tmp / "init");
    REQUIRE(c.pretrained.has_value());
    CHECK(c.pretrained->losses == c.random.losses);
    REQUIRE(c.pretrained->evals.size() == c.random.evals.size());
    for (std::size_t i = 0; i < c.random.evals.size(); ++i) CHECK(c.pretrained->evals[i].j_m == c.random.evals[i].j_m);
  }
  SUBCASE("without a checkpoint only the random run happens") {
    const InitComparison c = init_experiment(cfg, train, heldout, {});
    CHECK(!c.pretrained.has_value());
    CHECK(c.random.losses.size() == 4);
  }
  SUBCASE("output directories are split per run") {
    cfg.output_dir = tmp / "runs";
    save_checkpoint(model_checkpoint(MotionModel<float>(cfg.model, 99)), tmp / "init");
    const InitComparison c = init_experiment(cfg, train, heldout, tmp / "init");
    CHECK(fs::exists(tmp / "runs" / "random" / "loss.csv"));
    CHECK(fs::exists(tmp / "runs" / "pretrained" / "loss.csv"));
    CHECK(c.pretrained->losses != c.random.losses);
  }
  SUBCASE("an incompatible checkpoint is rejected") {
    ModelConfig wide = cfg.model;
    wide.channels = 8;
    save_checkpoint(model_checkpoint(MotionModel<float>(wide, 0)), tmp / "wide");
    CHECK_THROWS_AS(init_experiment(cfg, train, heldout, tmp / "wide"), ShapeError);
  }
}

TEST_CASE("model checkpoints roundtrip and reject mismatched shapes") {
  TempDir tmp("ckpt");
  const MotionModel<float> model(tiny_model(), 12);
  save_checkpoint(model_checkpoint(model), tmp / "m");
  const MotionModel<float> back = model_from_checkpoint(load_checkpoint(tmp / "m"));
  CHECK(same_params(model, back));

  ModelConfig other = tiny_model();
  other.cam_width = 6;
  MotionModel<float> mismatch(other, 0);
  CHECK_THROWS_AS(load_parameters(mismatch, load_checkpoint(tmp / "m")), ShapeError);
  CHECK_THROWS_AS(load_parameters(mismatch, Checkpoint{}), DataError);
}

TEST_CASE("predictions cover every frame of a long sequence") {
  const TrainingSet data = tiny_set(1, 13, 10);
  const MotionModel<float> model(tiny_model(), 0);
  const MatrixF probs = predict_sequence(model, data.sequences[0], data.bundles[0]);
  CHECK(probs.rows() == 10);
  CHECK(probs.cols() == 256);
  CHECK(probs.minCoeff() >= 0.0f);
  CHECK(probs.maxCoeff() <= 1.0f);
}

TEST_CASE("training sets reject wrong image sizes") {
  SceneConfig scene;
  scene.height = 32;
  scene.width = 32;
  scene.frames = 3;
  std::vector<FrameSequence> seqs{generate_sequence(scene, 0).sequence};
  CHECK_THROWS_AS(prepare_training_set(seqs, ProviderSpec{}, tiny_model()), ShapeError);
}
