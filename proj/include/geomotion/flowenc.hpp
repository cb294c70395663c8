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

// Optical flow -> patch tokens: conv3x3(2 -> D/2), ReLU, conv3x3(D/2 -> D)
// at full resolution, bilinear downsampling to the patch grid, flatten.

#pragma once

#include "geomotion/diffcore.hpp"
#include "geomotion/providers.hpp"

#include <random>
#include <vector>

namespace geomotion {

inline constexpr const char* kFlowConv1Weight = "flow.conv1.weight";
inline constexpr const char* kFlowConv1Bias = "flow.conv1.bias";
inline constexpr const char* kFlowConv2Weight = "flow.conv2.weight";
inline constexpr const char* kFlowConv2Bias = "flow.conv2.bias";

template <typename Scalar>
void init_flow_encoder(ParamStore<Scalar>& params, Index flow_width, std::mt19937_64& rng) {
  if (flow_width < 2 || flow_width % 2 != 0) throw ConfigError("flow token width must be an even number >= 2");
  const Index hidden = flow_width / 2;
  glorot_uniform(params.add(kFlowConv1Weight, {hidden, 2, 3, 3}), 2 * 9, hidden * 9, rng);
  params.add(kFlowConv1Bias, {hidden});
  glorot_uniform(params.add(kFlowConv2Weight, {flow_width, hidden, 3, 3}), hidden * 9, flow_width * 9, rng);
  params.add(kFlowConv2Bias, {flow_width});
}

template <typename Scalar>
struct FlowEncoderCache {
  int height = 0;
  int width = 0;
  std::vector<Matrix<Scalar>> input;   // [2, HW]
  std::vector<Matrix<Scalar>> hidden;  // pre-activation [D/2, HW]
};

/// Flow field as a [2, H*W] plane pair (u row, v row).
template <typename Scalar>
Matrix<Scalar> flow_planes(const FlowField& flow) {
  Matrix<Scalar> planes(2, static_cast<Index>(flow.width) * flow.height);
  for (Index p = 0; p < planes.cols(); ++p) {
    planes(0, p) = static_cast<Scalar>(flow.vectors[static_cast<std::size_t>(2 * p)]);
    planes(1, p) = static_cast<Scalar>(flow.vectors[static_cast<std::size_t>(2 * p + 1)]);
  }
  return planes;
}

/// Returns tokens [N*hw, D_flow], frame-major.
template <typename Scalar>
Matrix<Scalar> encode_flow(const std::vector<FlowField>& flows, const ParamStore<Scalar>& params, const TokenGrid& grid,
                           FlowEncoderCache<Scalar>* cache = nullptr) {
  const auto w1 = params.matrix(kFlowConv1Weight);
  const auto w2 = params.matrix(kFlowConv2Weight);
  const auto& b1 = params.vec(kFlowConv1Bias);
  const auto& b2 = params.vec(kFlowConv2Bias);
  const Index flow_width = w2.rows();
  const Index hw = grid.tokens();
  const int height = grid.image_height();
  const int width = grid.image_width();
  Matrix<Scalar> tokens(static_cast<Index>(flows.size()) * hw, flow_width);
  if (cache) {
    cache->height = height;
    cache->width = width;
    cache->input.clear();
    cache->hidden.clear();
  }
  for (std::size_t t = 0; t < flows.size(); ++t) {
    if (flows[t].width != width || flows[t].height != height) {
      throw ShapeError("flow " + std::to_string(t) + " is " + std::to_string(flows[t].width) + "x" +
                       std::to_string(flows[t].height) + ", frames are " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    Matrix<Scalar> input = flow_planes<Scalar>(flows[t]);
    Matrix<Scalar> hidden = conv3x3<Scalar>(input, height, width, w1, b1);
    const Matrix<Scalar> features = conv3x3<Scalar>(relu<Scalar>(hidden), height, width, w2, b2);
    const Matrix<Scalar> pooled = bilinear_resize<Scalar>(features, height, width, grid.rows, grid.cols);
    tokens.middleRows(static_cast<Index>(t) * hw, hw) = pooled.transpose();
    if (cache) {
      cache->input.push_back(std::move(input));
      cache->hidden.push_back(std::move(hidden));
    }
  }
  return tokens;
}

/// Accumulates conv parameter gradients from dL/dtokens.
template <typename Scalar>
void encode_flow_backward(const FlowEncoderCache<Scalar>& cache, ParamStore<Scalar>& params, const TokenGrid& grid,
                          const ConstMatrixRef<Scalar>& dtokens) {
  const auto w1 = params.matrix(kFlowConv1Weight);
  const auto w2 = params.matrix(kFlowConv2Weight);
  const Index hw = grid.tokens();
  for (std::size_t t = 0; t < cache.input.size(); ++t) {
    const Matrix<Scalar> dpooled = dtokens.middleRows(static_cast<Index>(t) * hw, hw).transpose();
    const Matrix<Scalar> dfeatures =
        bilinear_resize_backward<Scalar>(dpooled, cache.height, cache.width, grid.rows, grid.cols);
    const Matrix<Scalar> activated = relu<Scalar>(cache.hidden[t]);
    const Matrix<Scalar> dactivated = conv3x3_backward<Scalar>(activated, cache.height, cache.width, w2, dfeatures,
                                                               params.grad_matrix(kFlowConv2Weight),
                                                               params.grad_vec(kFlowConv2Bias));
    const Matrix<Scalar> dhidden = relu_backward<Scalar>(cache.hidden[t], dactivated);
    conv3x3_backward<Scalar>(cache.input[t], cache.height, cache.width, w1, dhidden, params.grad_matrix(kFlowConv1Weight),
                             params.grad_vec(kFlowConv1Bias));
  }
}

}  // namespace geomotion
