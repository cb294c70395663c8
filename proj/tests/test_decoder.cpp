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


#include "geomotion/decoder.hpp"
#include "geomotion/losses.hpp"

#include <doctest.h>

#include <random>

using namespace geomotion;

namespace {

template <typename Scalar>
Matrix<Scalar> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
  return m;
}

DecoderConfig toy_decoder() {
  DecoderConfig cfg;
  cfg.width = 16;
  cfg.heads = 4;
  cfg.layers = 5;
  cfg.patch = 8;
  cfg.max_frames = 4;
  return cfg;
}

template <typename Scalar>
ParamStore<Scalar> decoder_params(const DecoderConfig& cfg, std::uint64_t seed) {
  ParamStore<Scalar> p;
  std::mt19937_64 rng(seed);
  init_decoder(p, cfg, rng);
  return p;
}

}  // namespace

TEST_CASE("toy decode shape") {
  std::mt19937_64 rng(1);
  const DecoderConfig cfg = toy_decoder();
  const auto p = decoder_params<float>(cfg, 1);
  const TokenGrid grid = TokenGrid::for_image(64, 64, 8);
  const MatrixF logits = decode<float>(random_matrix<float>(2 * 64, 16, rng), 2, grid, p, cfg);
  CHECK(logits.rows() == 128);
  CHECK(logits.cols() == 64);
  int blocks = 0;
  for (const auto& [name, t] : p) blocks += name.ends_with("attn.qkv.weight") ? 1 : 0;
  CHECK(blocks == 5);
}

TEST_CASE("sequences never attend across each other") {
  std::mt19937_64 rng(2);
  const DecoderConfig cfg = toy_decoder();
  const auto p = decoder_params<float>(cfg, 2);
  const TokenGrid grid = TokenGrid::for_image(32, 32, 8);
  const MatrixF a = random_matrix<float>(2 * 16, 16, rng);
  const MatrixF b = random_matrix<float>(3 * 16, 16, rng);
  const auto batch = decode_batch<float>({a, b}, {2, 3}, grid, p, cfg);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0] == decode<float>(a, 2, grid, p, cfg));
  CHECK(batch[1] == decode<float>(b, 3, grid, p, cfg));
  const auto swapped = decode_batch<float>({b, a}, {3, 2}, grid, p, cfg);
  CHECK(swapped[1] == batch[0]);
}

TEST_CASE("frames of one sequence do attend to each other") {
  std::mt19937_64 rng(3);
  const DecoderConfig cfg = toy_decoder();
  const auto p = decoder_params<double>(cfg, 3);
  const TokenGrid grid = TokenGrid::for_image(16, 16, 8);
  MatrixD x = random_matrix<double>(2 * 4, 16, rng);
  const MatrixD before = decode<double>(x, 2, grid, p, cfg);
  x.bottomRows(4) = random_matrix<double>(4, 16, rng);
  const MatrixD after = decode<double>(x, 2, grid, p, cfg);
  CHECK((after.topRows(4) - before.topRows(4)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero head weights give the head bias everywhere") {
  std::mt19937_64 rng(4);
  const DecoderConfig cfg = toy_decoder();
  auto p = decoder_params<float>(cfg, 4);
  p.vec(decoder_names::kHeadWeight).setZero();
  Eigen::VectorXf bias(64);
  for (Index i = 0; i < 64; ++i) bias[i] = 0.1f * static_cast<float>(i) - 3.0f;
  p.vec(decoder_names::kHeadBias) = bias;
  const TokenGrid grid = TokenGrid::for_image(16, 16, 8);
  const MatrixF logits = decode<float>(random_matrix<float>(8, 16, rng), 2, grid, p, cfg);
  for (Index r = 0; r < logits.rows(); ++r) CHECK(logits.row(r) == bias.transpose());
}

TEST_CASE("to_mask pixel-shuffles token logits") {
  const TokenGrid grid = TokenGrid::for_image(16, 24, 8);  // 2 x 3 tokens
  SUBCASE("zero logits give one half") {
    const MatrixF probs = to_mask<float>(MatrixF::Zero(2 * 6, 64), 2, grid);
    CHECK(probs.rows() == 2);
    CHECK(probs.cols() == 16 * 24);
    CHECK((probs.array() == 0.5f).all());
  }
  SUBCASE("a saturated token lights exactly its block") {
    MatrixD logits = MatrixD::Constant(6, 64, -30.0);
    logits.row(1 * 3 + 2).setConstant(30.0);
    const MatrixD probs = to_mask<double>(logits, 1, grid);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 24; ++x) {
        const bool inside = y >= 8 && y < 16 && x >= 16 && x < 24;
        const double p = probs(0, y * 24 + x);
        CHECK(inside ? p > 1.0 - 1e-12 : p < 1e-12);
      }
    }
  }
  SUBCASE("within a block the logit index is row-major over the patch") {
    MatrixD logits = MatrixD::Zero(6, 64);
    logits(0, 3 * 8 + 5) = 1.0;  // token (0,0), pixel (x=5, y=3)
    const MatrixD probs = to_mask<double>(logits, 1, grid);
    CHECK(probs(0, 3 * 24 + 5) == doctest::Approx(sigmoid(1.0)));
    CHECK(probs(0, 5 * 24 + 3) == 0.5);
  }
  CHECK_THROWS_AS(to_mask<float>(MatrixF::Zero(6, 63), 1, grid), ShapeError);
}

TEST_CASE("probabilities stay in [0, 1] for extreme inputs") {
  std::mt19937_64 rng(5);
  const DecoderConfig cfg = toy_decoder();
  const auto p = decoder_params<float>(cfg, 5);
  const TokenGrid grid = TokenGrid::for_image(16, 16, 8);
  const MatrixF logits = decode<float>(random_matrix<float>(8, 16, rng, 1e3), 2, grid, p, cfg);
  const MatrixF probs = to_mask<float>(logits * 1e3f, 2, grid);
  CHECK(probs.allFinite());
  CHECK(probs.minCoeff() >= 0.0f);
  CHECK(probs.maxCoeff() <= 1.0f);
}

TEST_CASE("decode is bitwise deterministic") {
  std::mt19937_64 rng(6);
  const DecoderConfig cfg = toy_decoder();
  const auto p = decoder_params<float>(cfg, 6);
  const TokenGrid grid = TokenGrid::for_image(32, 32, 8);
  const MatrixF x = random_matrix<float>(3 * 16, 16, rng);
  CHECK(decode<float>(x, 3, grid, p, cfg) == decode<float>(x, 3, grid, p, cfg));
}

TEST_CASE("decode rejects inconsistent inputs") {
  std::mt19937_64 rng(7);
  const DecoderConfig cfg = toy_decoder();
  const auto p = decoder_params<float>(cfg, 7);
  const TokenGrid grid = TokenGrid::for_image(16, 16, 8);
  CHECK_THROWS_AS(decode<float>(random_matrix<float>(8, 12, rng), 2, grid, p, cfg), ShapeError);
  CHECK_THROWS_AS(decode<float>(random_matrix<float>(9, 16, rng), 2, grid, p, cfg), ShapeError);
  CHECK_THROWS_AS(decode<float>(random_matrix<float>(20, 16, rng), 5, grid, p, cfg), ShapeError);
  DecoderConfig odd = cfg;
  odd.heads = 3;
  ParamStore<float> q;
  CHECK_THROWS_AS(init_decoder(q, odd, rng), ConfigError);
}

TEST_CASE("decode, to_mask and loss gradients match finite differences") {
  std::mt19937_64 rng(8);
  DecoderConfig cfg;
  cfg.width = 4;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.ffn_mult = 2;
  cfg.patch = 4;
  cfg.max_frames = 2;
  auto p = decoder_params<double>(cfg, 8);
  const TokenGrid grid = TokenGrid::for_image(8, 8, 4);
  const MatrixD fused = random_matrix<double>(2 * 4, 4, rng);
  MatrixD gt(2, 64);
  std::bernoulli_distribution coin(0.3);
  for (Index i = 0; i < gt.size(); ++i) gt.data()[i] = coin(rng) ? 1.0 : 0.0;
  const LossConfig loss;
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    p.unflatten(x);
    p.zero_grad();
    DecoderCache<double> cache;
    const MatrixD logits = decode<double>(fused, 2, grid, p, cfg, &cache);
    const MatrixD probs = to_mask<double>(logits, 2, grid);
    MatrixD dprobs;
    const double value = total_loss<double>(probs, gt, loss, &dprobs);
    if (g) {
      decode_backward<double>(cache, p, cfg, grid, to_mask_backward<double>(probs, dprobs, grid));
      *g = p.flatten_grad();
    }
    return value;
  };
  CHECK(grad_check(f, p.flatten()) < 1e-4);
}

TEST_CASE("refinement hooks") {
  const std::vector<RgbImage> frames(2, RgbImage(16, 16));
  SUBCASE("default hook leaves binary masks unchanged") {
    std::mt19937_64 rng(9);
    CoarseMasks coarse{MatrixF(2, 256), 16, 16};
    std::bernoulli_distribution coin(0.5);
    for (Index i = 0; i < coarse.probs.size(); ++i) coarse.probs.data()[i] = coin(rng) ? 1.0f : 0.0f;
    CHECK(refine(frames, coarse) == coarse.probs);
  }
  SUBCASE("default hook thresholds at one half") {
    const CoarseMasks coarse{MatrixF::Constant(2, 256, 0.6f), 16, 16};
    CHECK((refine(frames, coarse).array() == 1.0f).all());
    const CoarseMasks low{MatrixF::Constant(2, 256, 0.5f), 16, 16};
    CHECK((refine(frames, low).array() == 0.0f).all());
  }
  SUBCASE("default hook upsamples coarse masks") {
    const CoarseMasks coarse{MatrixF::Constant(2, 16, 0.9f), 4, 4};
    const MatrixF out = refine(frames, coarse);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 256);
  }
  SUBCASE("identity hook returns its input bitwise") {
    std::mt19937_64 rng(10);
    const CoarseMasks coarse{random_matrix<float>(2, 256, rng), 16, 16};
    const RefinementHook identity = [](const std::vector<RgbImage>&, const CoarseMasks& c) { return c.probs; };
    CHECK(refine(frames, coarse, identity) == coarse.probs);
  }
  SUBCASE("hook output of the wrong shape is rejected") {
    const CoarseMasks coarse{MatrixF::Zero(2, 256), 16, 16};
    const RefinementHook bad = [](const std::vector<RgbImage>&, const CoarseMasks&) { return MatrixF::Zero(2, 10).eval(); };
    CHECK_THROWS_AS(refine(frames, coarse, bad), ShapeError);
  }
}

TEST_CASE("spatial encoding distinguishes every token") {
  const TokenGrid grid = TokenGrid::for_image(64, 64, 8);
  const MatrixD table = spatial_encoding<double>(grid, 16);
  for (Index i = 0; i < table.rows(); ++i) {
    for (Index j = i + 1; j < table.rows(); ++j) CHECK((table.row(i) - table.row(j)).norm() > 1e-6);
  }
}
