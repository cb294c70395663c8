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

// Feature aggregation:
//   geo   = concat(geo_low, geo_high)             [T, 4C]
//   geo   = ReLU(Linear(geo))                     [T, 2C]
//   cat   = concat(geo, flow, cam)                [T, 2C + Dflow + Dcam]
//   fused = Linear(cat)                           [T, 2C]
// Each token is processed independently.

#pragma once

#include "geomotion/diffcore.hpp"

#include <random>
#include <string>

namespace geomotion {

inline constexpr const char* kFusionGeoWeight = "fusion.geo.weight";
inline constexpr const char* kFusionGeoBias = "fusion.geo.bias";
inline constexpr const char* kFusionOutWeight = "fusion.out.weight";
inline constexpr const char* kFusionOutBias = "fusion.out.bias";

/// Which modalities reach the fusion MLP. A disabled modality is replaced
/// by zeros of the same shape, so parameters never change shape.
struct AblationToggles {
  bool cam = true;
  bool flow = true;
  bool shallow = true;

  friend bool operator==(const AblationToggles&, const AblationToggles&) = default;
};

template <typename Scalar>
void init_fusion(ParamStore<Scalar>& params, Index channels, Index flow_width, Index cam_width, std::mt19937_64& rng) {
  glorot_uniform(params.add(kFusionGeoWeight, {2 * channels, 4 * channels}), 4 * channels, 2 * channels, rng);
  params.add(kFusionGeoBias, {2 * channels});
  const Index cat = 2 * channels + flow_width + cam_width;
  glorot_uniform(params.add(kFusionOutWeight, {2 * channels, cat}), cat, 2 * channels, rng);
  params.add(kFusionOutBias, {2 * channels});
}

template <typename Scalar>
struct FusionCache {
  Matrix<Scalar> geo;         // [T, 4C]
  Matrix<Scalar> geo_hidden;  // pre-activation [T, 2C]
  Matrix<Scalar> cat;         // [T, 2C + Dflow + Dcam]
  Index flow_width = 0;
  AblationToggles toggles;
};

namespace detail {

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + ", " + std::to_string(cols) + "]";
}

template <typename Scalar>
void expect_shape(const ConstMatrixRef<Scalar>& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string("fusion: ") + name + " is " + shape_string(m.rows(), m.cols()) + ", expected " +
                     shape_string(rows, cols));
  }
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> ablate(const ConstMatrixRef<Scalar>& geo_low, const ConstMatrixRef<Scalar>& geo_high,
                      const ConstMatrixRef<Scalar>& flow, const ConstMatrixRef<Scalar>& cam,
                      const ParamStore<Scalar>& params, const AblationToggles& toggles,
                      FusionCache<Scalar>* cache = nullptr) {
  const auto w_geo = params.matrix(kFusionGeoWeight);
  const auto w_out = params.matrix(kFusionOutWeight);
  const Index tokens = geo_high.rows();
  const Index geo_width = w_geo.cols() / 2;
  const Index fused_width = w_out.rows();
  detail::expect_shape<Scalar>(geo_high, tokens, geo_width, "geo_high");
  detail::expect_shape<Scalar>(geo_low, tokens, geo_width, "geo_low");
  const Index flow_width = flow.cols();
  const Index cam_width = w_out.cols() - w_geo.rows() - flow_width;
  detail::expect_shape<Scalar>(flow, tokens, flow_width, "flow");
  detail::expect_shape<Scalar>(cam, tokens, cam_width, "cam");
  if (cam_width < 0 || w_out.cols() != fused_width + flow_width + cam_width) {
    throw ShapeError("fusion: flow/cam widths do not match the output projection");
  }

  Matrix<Scalar> geo(tokens, 2 * geo_width);
  if (toggles.shallow) {
    geo.leftCols(geo_width) = geo_low;
  } else {
    geo.leftCols(geo_width).setZero();
  }
  geo.rightCols(geo_width) = geo_high;
  Matrix<Scalar> hidden = linear<Scalar>(geo, w_geo, params.vec(kFusionGeoBias));

  Matrix<Scalar> cat(tokens, w_out.cols());
  cat.leftCols(fused_width) = relu<Scalar>(hidden);
  if (toggles.flow) {
    cat.middleCols(fused_width, flow_width) = flow;
  } else {
    cat.middleCols(fused_width, flow_width).setZero();
  }
  if (toggles.cam) {
    cat.rightCols(cam_width) = cam;
  } else {
    cat.rightCols(cam_width).setZero();
  }
  Matrix<Scalar> fused = linear<Scalar>(cat, w_out, params.vec(kFusionOutBias));
  if (cache) {
    cache->geo = std::move(geo);
    cache->geo_hidden = std::move(hidden);
    cache->cat = std::move(cat);
    cache->flow_width = flow_width;
    cache->toggles = toggles;
  }
  return fused;
}

template <typename Scalar>
Matrix<Scalar> aggregate(const ConstMatrixRef<Scalar>& geo_low, const ConstMatrixRef<Scalar>& geo_high,
                         const ConstMatrixRef<Scalar>& flow, const ConstMatrixRef<Scalar>& cam,
                         const ParamStore<Scalar>& params, FusionCache<Scalar>* cache = nullptr) {
  return ablate<Scalar>(geo_low, geo_high, flow, cam, params, AblationToggles{}, cache);
}

/// Accumulates both linear maps' gradients; returns dL/dflow_tokens (zero
/// when the flow modality is disabled).
template <typename Scalar>
Matrix<Scalar> aggregate_backward(const FusionCache<Scalar>& cache, ParamStore<Scalar>& params,
                                  const ConstMatrixRef<Scalar>& dfused) {
  const auto w_out = params.matrix(kFusionOutWeight);
  const Index fused_width = w_out.rows();
  const Matrix<Scalar> dcat = linear_backward<Scalar>(cache.cat, w_out, dfused, params.grad_matrix(kFusionOutWeight),
                                                      params.grad_vec(kFusionOutBias));
  const Matrix<Scalar> dhidden = relu_backward<Scalar>(cache.geo_hidden, dcat.leftCols(fused_width));
  // Geometry tokens come from the frozen provider; no input gradient needed.
  params.grad_matrix(kFusionGeoWeight).noalias() += dhidden.transpose() * cache.geo;
  params.grad_vec(kFusionGeoBias).noalias() += dhidden.colwise().sum().transpose();
  if (!cache.toggles.flow) return Matrix<Scalar>::Zero(dfused.rows(), cache.flow_width);
  return dcat.middleCols(fused_width, cache.flow_width);
}

}  // namespace geomotion
