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


#include "geomotion/fusion.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace geomotion;

namespace {

template <typename Scalar>
Matrix<Scalar> random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(u(rng));
  return m;
}

template <typename Scalar>
struct Inputs {
  Matrix<Scalar> low, high, flow, cam;
};

template <typename Scalar>
Inputs<Scalar> random_inputs(Index tokens, Index c, Index df, Index dc, std::mt19937_64& rng) {
  return {random_matrix<Scalar>(tokens, 2 * c, rng), random_matrix<Scalar>(tokens, 2 * c, rng),
          random_matrix<Scalar>(tokens, df, rng), random_matrix<Scalar>(tokens, dc, rng)};
}

template <typename Scalar>
ParamStore<Scalar> fusion_params(Index c, Index df, Index dc, std::uint64_t seed) {
  ParamStore<Scalar> p;
  std::mt19937_64 rng(seed);
  init_fusion(p, c, df, dc, rng);
  // Non-zero biases so bias paths are exercised.
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const char* name : {kFusionGeoBias, kFusionOutBias}) {
    for (Index i = 0; i < p.at(name).size(); ++i) p.at(name).value[i] = static_cast<Scalar>(u(rng));
  }
  return p;
}

}  // namespace

TEST_CASE("full-scale widths follow 4096 -> 2048 -> 2688 -> 2048") {
  std::mt19937_64 rng(1);
  const auto p = fusion_params<float>(1024, 128, 512, 1);
  CHECK(p.at(kFusionGeoWeight).shape == std::vector<Index>{2048, 4096});
  CHECK(p.at(kFusionOutWeight).shape == std::vector<Index>{2048, 2688});
  const auto in = random_inputs<float>(3, 1024, 128, 512, rng);
  FusionCache<float> cache;
  const MatrixF out = aggregate<float>(in.low, in.high, in.flow, in.cam, p, &cache);
  CHECK(cache.geo.cols() == 4096);
  CHECK(cache.geo_hidden.cols() == 2048);
  CHECK(cache.cat.cols() == 2688);
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 2048);
}

TEST_CASE("toy widths follow 32 -> 16 -> 28 -> 16") {
  std::mt19937_64 rng(2);
  const auto p = fusion_params<float>(8, 4, 8, 2);
  const auto in = random_inputs<float>(64, 8, 4, 8, rng);
  FusionCache<float> cache;
  const MatrixF out = aggregate<float>(in.low, in.high, in.flow, in.cam, p, &cache);
  CHECK(cache.geo.cols() == 32);
  CHECK(cache.geo_hidden.cols() == 16);
  CHECK(cache.cat.cols() == 28);
  CHECK(out.cols() == 16);
}

TEST_CASE("zero inputs with zero biases give zero output") {
  ParamStore<float> p;
  std::mt19937_64 rng(3);
  init_fusion(p, 8, 4, 8, rng);
  const MatrixF z16 = MatrixF::Zero(5, 16);
  const MatrixF out = aggregate<float>(z16, z16, MatrixF::Zero(5, 4), MatrixF::Zero(5, 8), p);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("hidden layer has ReLU, output layer does not") {
  std::mt19937_64 rng(4);
  const auto p = fusion_params<double>(4, 4, 4, 4);
  const auto in = random_inputs<double>(20, 4, 4, 4, rng);
  FusionCache<double> cache;
  const MatrixD out = aggregate<double>(in.low, in.high, in.flow, in.cam, p, &cache);
  CHECK(cache.cat.leftCols(8).minCoeff() >= 0.0);
  CHECK(cache.geo_hidden.minCoeff() < 0.0);
  CHECK(out.minCoeff() < 0.0);
  // Reference: explicit composition.
  MatrixD geo(20, 16);
  geo << in.low, in.high;
  MatrixD hidden = (geo * p.matrix(kFusionGeoWeight).transpose()).rowwise() + p.vec(kFusionGeoBias).transpose();
  MatrixD cat(20, 16);
  cat << hidden.cwiseMax(0.0), in.flow, in.cam;
  const MatrixD ref = (cat * p.matrix(kFusionOutWeight).transpose()).rowwise() + p.vec(kFusionOutBias).transpose();
  CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ablation toggles") {
  std::mt19937_64 rng(5);
  const auto p = fusion_params<float>(8, 4, 8, 5);
  const auto in = random_inputs<float>(32, 8, 4, 8, rng);
  const auto other = random_inputs<float>(32, 8, 4, 8, rng);
  const MatrixF full = aggregate<float>(in.low, in.high, in.flow, in.cam, p);

  SUBCASE("all on is aggregate") {
    CHECK(ablate<float>(in.low, in.high, in.flow, in.cam, p, AblationToggles{}) == full);
  }
  SUBCASE("flow off ignores flow tokens") {
    const AblationToggles t{true, false, true};
    const MatrixF a = ablate<float>(in.low, in.high, in.flow, in.cam, p, t);
    CHECK(ablate<float>(in.low, in.high, other.flow, in.cam, p, t) == a);
    CHECK(a != full);
  }
  SUBCASE("cam off ignores camera tokens") {
    const AblationToggles t{false, true, true};
    CHECK(ablate<float>(in.low, in.high, in.flow, in.cam, p, t) == ablate<float>(in.low, in.high, in.flow, other.cam, p, t));
  }
  SUBCASE("shallow off ignores geo_low") {
    const AblationToggles t{true, true, false};
    CHECK(ablate<float>(in.low, in.high, in.flow, in.cam, p, t) == ablate<float>(other.low, in.high, in.flow, in.cam, p, t));
  }
  SUBCASE("baseline uses only deep geometry") {
    const AblationToggles t{false, false, false};
    CHECK(ablate<float>(in.low, in.high, in.flow, in.cam, p, t) ==
          ablate<float>(other.low, in.high, other.flow, other.cam, p, t));
    CHECK(ablate<float>(in.low, in.high, in.flow, in.cam, p, t) != ablate<float>(in.low, other.high, in.flow, in.cam, p, t));
  }
}

TEST_CASE("shape mismatches name the offending tensor") {
  std::mt19937_64 rng(6);
  const auto p = fusion_params<float>(8, 4, 8, 6);
  const auto in = random_inputs<float>(10, 8, 4, 8, rng);
  const MatrixF short_cam = random_matrix<float>(9, 8, rng);
  CHECK_THROWS_WITH_AS(aggregate<float>(in.low, in.high, in.flow, short_cam, p), doctest::Contains("cam"), ShapeError);
  const MatrixF narrow_low = random_matrix<float>(10, 12, rng);
  CHECK_THROWS_WITH_AS(aggregate<float>(narrow_low, in.high, in.flow, in.cam, p), doctest::Contains("geo_low"), ShapeError);
  const MatrixF wide_flow = random_matrix<float>(10, 6, rng);
  CHECK_THROWS_AS(aggregate<float>(in.low, in.high, wide_flow, in.cam, p), ShapeError);
}

TEST_CASE("output shape over random sizes") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const Index frames = 1 + static_cast<Index>(rng() % 4);
    const Index hw = 1 + static_cast<Index>(rng() % 30);
    const Index c = 1 + static_cast<Index>(rng() % 12);
    const Index df = 2 * (1 + static_cast<Index>(rng() % 4));
    const Index dc = 1 + static_cast<Index>(rng() % 9);
    const auto p = fusion_params<float>(c, df, dc, rng());
    const auto in = random_inputs<float>(frames * hw, c, df, dc, rng);
    const MatrixF out = aggregate<float>(in.low, in.high, in.flow, in.cam, p);
    CHECK(out.rows() == frames * hw);
    CHECK(out.cols() == 2 * c);
    CHECK(out.allFinite());
  }
}

TEST_CASE("token permutation commutes with fusion") {
  std::mt19937_64 rng(8);
  const auto p = fusion_params<double>(4, 4, 4, 8);
  const auto in = random_inputs<double>(15, 4, 4, 4, rng);
  std::vector<int> perm(15);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> P(15);
  for (int i = 0; i < 15; ++i) P.indices()[i] = perm[static_cast<std::size_t>(i)];
  const MatrixD out = aggregate<double>(in.low, in.high, in.flow, in.cam, p);
  const MatrixD permuted = aggregate<double>(P * in.low, P * in.high, P * in.flow, P * in.cam, p);
  CHECK((permuted - P * out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fusion gradients match finite differences") {
  std::mt19937_64 rng(9);
  auto p = fusion_params<double>(3, 4, 2, 9);
  const auto in = random_inputs<double>(7, 3, 4, 2, rng);
  const MatrixD r = random_matrix<double>(7, 6, rng);
  for (const AblationToggles& t : {AblationToggles{}, AblationToggles{false, false, false}}) {
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      p.unflatten(x);
      p.zero_grad();
      FusionCache<double> cache;
      const MatrixD out = ablate<double>(in.low, in.high, in.flow, in.cam, p, t, &cache);
      if (g) {
        aggregate_backward<double>(cache, p, r);
        *g = p.flatten_grad();
      }
      return (out.array() * r.array()).sum();
    };
    CHECK(grad_check(f, p.flatten()) < 1e-4);
  }

  // Gradient with respect to the flow tokens.
  MatrixD flow = in.flow;
  const Objective df = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    flow = Eigen::Map<const MatrixD>(x.data(), 7, 4);
    FusionCache<double> cache;
    const MatrixD out = aggregate<double>(in.low, in.high, flow, in.cam, p, &cache);
    if (g) {
      const MatrixD d = aggregate_backward<double>(cache, p, r);
      *g = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
    }
    return (out.array() * r.array()).sum();
  };
  CHECK(grad_check(df, Eigen::Map<const Eigen::VectorXd>(in.flow.data(), in.flow.size())) < 1e-4);
}
