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

#pragma once

#include "geomotion/decoder.hpp"
#include "geomotion/flowenc.hpp"
#include "geomotion/fusion.hpp"
#include "geomotion/losses.hpp"
#include "geomotion/providers.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace geomotion {

struct ModelConfig {
  int image_size = 64;
  int patch = 8;
  Index channels = 8;    // C
  Index flow_width = 4;  // D_flow
  Index cam_width = 8;   // D_cam
  int heads = 4;
  int layers = 5;
  int ffn_mult = 4;
  int max_frames = 16;
  bool positional = true;
  AblationToggles toggles;

  TokenGrid grid() const { return TokenGrid::for_image(image_size, image_size, patch); }
  DecoderConfig decoder() const {
    return {2 * channels, heads, layers, ffn_mult, patch, max_frames, positional};
  }
  void validate() const;
};

json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const json& doc);

/// Full trainable pipeline: flow encoder, fusion MLP, motion decoder, head.
template <typename Scalar>
class MotionModel {
 public:
  struct State {
    Index frames = 0;
    FlowEncoderCache<Scalar> flow;
    FusionCache<Scalar> fusion;
    DecoderCache<Scalar> decoder;
    Matrix<Scalar> probs;  // [N, H*W]
  };

  MotionModel() = default;
  MotionModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    init_flow_encoder(params_, cfg.flow_width, rng);
    init_fusion(params_, cfg.channels, cfg.flow_width, cfg.cam_width, rng);
    init_decoder(params_, cfg.decoder(), rng);
  }
  MotionModel(const ModelConfig& cfg, ParamStore<Scalar> params) : cfg_(cfg), params_(std::move(params)) {}

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  /// Per-pixel motion probabilities [N, H*W]. Bundle tokens are inputs only.
  Matrix<Scalar> forward(const GeometryBundle& bundle, const std::vector<FlowField>& flows, State* state = nullptr) const {
    const TokenGrid grid = cfg_.grid();
    if (bundle.grid.rows != grid.rows || bundle.grid.cols != grid.cols) throw ShapeError("bundle grid does not match the model");
    if (static_cast<Index>(flows.size()) != bundle.frames) throw ShapeError("need one flow per bundle frame");
    const Index frames = bundle.frames;
    const Matrix<Scalar> low = bundle.geo_low.template cast<Scalar>();
    const Matrix<Scalar> high = bundle.geo_high.template cast<Scalar>();
    const Matrix<Scalar> cam = bundle.cam.template cast<Scalar>();
    const Matrix<Scalar> flow_tokens = encode_flow<Scalar>(flows, params_, grid, state ? &state->flow : nullptr);
    const Matrix<Scalar> fused =
        ablate<Scalar>(low, high, flow_tokens, cam, params_, cfg_.toggles, state ? &state->fusion : nullptr);
    const Matrix<Scalar> logits =
        decode<Scalar>(fused, frames, grid, params_, cfg_.decoder(), state ? &state->decoder : nullptr);
    Matrix<Scalar> probs = to_mask<Scalar>(logits, frames, grid);
    if (state) {
      state->frames = frames;
      state->probs = probs;
    }
    return probs;
  }

  /// Accumulates parameter gradients given dL/dprobs.
  void backward(const State& state, const ConstMatrixRef<Scalar>& dprobs) {
    const TokenGrid grid = cfg_.grid();
    const Matrix<Scalar> dlogits = to_mask_backward<Scalar>(state.probs, dprobs, grid);
    const Matrix<Scalar> dfused = decode_backward<Scalar>(state.decoder, params_, cfg_.decoder(), grid, dlogits);
    const Matrix<Scalar> dflow = aggregate_backward<Scalar>(state.fusion, params_, dfused);
    if (cfg_.toggles.flow) encode_flow_backward<Scalar>(state.flow, params_, grid, dflow);
  }

  /// Forward, loss and backward in one call; gradients are zeroed first.
  /// Activations live in a scratch state that is reused between calls.
  Scalar loss_and_grad(const GeometryBundle& bundle, const std::vector<FlowField>& flows, const ConstMatrixRef<Scalar>& gt,
                       const LossConfig& loss_cfg) {
    params_.zero_grad();
    const Matrix<Scalar> probs = forward(bundle, flows, &scratch_);
    Matrix<Scalar> dprobs;
    const Scalar loss = total_loss<Scalar>(probs, gt, loss_cfg, &dprobs);
    backward(scratch_, dprobs);
    return loss;
  }

 private:
  ModelConfig cfg_;
  ParamStore<Scalar> params_;
  State scratch_;
};

/// Ground-truth masks of the given frames as [N, H*W] in {0, 1}.
template <typename Scalar>
Matrix<Scalar> mask_matrix(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) return Matrix<Scalar>();
  Matrix<Scalar> out(static_cast<Index>(masks.size()), static_cast<Index>(masks.front().values.size()));
  for (std::size_t t = 0; t < masks.size(); ++t) {
    for (std::size_t i = 0; i < masks[t].values.size(); ++i) {
      out(static_cast<Index>(t), static_cast<Index>(i)) = static_cast<Scalar>(masks[t].values[i]);
    }
  }
  return out;
}

/// Binarizes probabilities (> threshold maps to 1).
BinaryMask binarize(const Eigen::Ref<const Eigen::RowVectorXf>& probs, int width, int height, double threshold = 0.5);

}  // namespace geomotion
