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

// Motion decoder: positional encodings, a stack of pre-norm self-attention
// blocks attending jointly over every token of every frame of one sequence,
// a final layer norm, and a per-token linear head emitting P*P logits that
// are laid out as the token's pixel block.

#pragma once

#include "geomotion/diffcore.hpp"
#include "geomotion/providers.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace geomotion {

struct DecoderConfig {
  Index width = 16;  // model width, equals the fused width 2C
  int heads = 4;
  int layers = 5;
  int ffn_mult = 4;
  int patch = 8;
  int max_frames = 16;
  bool positional = true;
};

namespace decoder_names {
inline std::string block(int i, const char* leaf) { return "decoder.block" + std::to_string(i) + "." + leaf; }
inline constexpr const char* kTemporal = "decoder.temporal";
inline constexpr const char* kNormGamma = "decoder.norm.gamma";
inline constexpr const char* kNormBeta = "decoder.norm.beta";
inline constexpr const char* kHeadWeight = "decoder.head.weight";
inline constexpr const char* kHeadBias = "decoder.head.bias";
}  // namespace decoder_names

template <typename Scalar>
void init_decoder(ParamStore<Scalar>& params, const DecoderConfig& cfg, std::mt19937_64& rng) {
  using namespace decoder_names;
  const Index d = cfg.width;
  if (cfg.heads <= 0 || d % cfg.heads != 0) throw ConfigError("decoder heads must divide the model width");
  if (cfg.layers <= 0) throw ConfigError("decoder needs at least one layer");
  const Index hidden = d * cfg.ffn_mult;
  auto& temporal = params.add(kTemporal, {cfg.max_frames, d});
  std::uniform_real_distribution<double> small(-0.02, 0.02);
  for (Index i = 0; i < temporal.size(); ++i) temporal.value[i] = static_cast<Scalar>(small(rng));
  for (int b = 0; b < cfg.layers; ++b) {
    params.add(block(b, "ln1.gamma"), {d}).value.setOnes();
    params.add(block(b, "ln1.beta"), {d});
    glorot_uniform(params.add(block(b, "attn.qkv.weight"), {3 * d, d}), d, 3 * d, rng);
    params.add(block(b, "attn.qkv.bias"), {3 * d});
    glorot_uniform(params.add(block(b, "attn.out.weight"), {d, d}), d, d, rng);
    params.add(block(b, "attn.out.bias"), {d});
    params.add(block(b, "ln2.gamma"), {d}).value.setOnes();
    params.add(block(b, "ln2.beta"), {d});
    glorot_uniform(params.add(block(b, "ffn.fc1.weight"), {hidden, d}), d, hidden, rng);
    params.add(block(b, "ffn.fc1.bias"), {hidden});
    glorot_uniform(params.add(block(b, "ffn.fc2.weight"), {d, hidden}), hidden, d, rng);
    params.add(block(b, "ffn.fc2.bias"), {d});
  }
  params.add(kNormGamma, {d}).value.setOnes();
  params.add(kNormBeta, {d});
  const Index logits = static_cast<Index>(cfg.patch) * cfg.patch;
  glorot_uniform(params.add(kHeadWeight, {logits, d}), d, logits, rng);
  params.add(kHeadBias, {logits});
}

/// 2-D sinusoidal table [rows*cols, width]: the first half of the channels
/// encodes the patch row, the second half the patch column.
template <typename Scalar>
Matrix<Scalar> spatial_encoding(const TokenGrid& grid, Index width) {
  Matrix<Scalar> table = Matrix<Scalar>::Zero(grid.tokens(), width);
  const Index half = width / 2;
  auto fill = [&](Index token, Index offset, Index span, double position) {
    for (Index i = 0; i < span; ++i) {
      const double frequency = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(span));
      table(token, offset + i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(position * frequency) : std::cos(position * frequency));
    }
  };
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const Index token = static_cast<Index>(r) * grid.cols + c;
      fill(token, 0, half, r);
      fill(token, half, width - half, c);
    }
  }
  return table;
}

template <typename Scalar>
struct DecoderBlockCache {
  Matrix<Scalar> input;
  LayerNormCache<Scalar> ln1;
  AttentionCache<Scalar> attn;
  Matrix<Scalar> middle;
  LayerNormCache<Scalar> ln2;
  Matrix<Scalar> ffn_input;
  Matrix<Scalar> ffn_hidden;  // pre-activation
};

template <typename Scalar>
struct DecoderCache {
  Index frames = 0;
  std::vector<DecoderBlockCache<Scalar>> blocks;
  LayerNormCache<Scalar> norm;
  Matrix<Scalar> head_input;
};

namespace detail {

template <typename Scalar>
AttentionWeights<Scalar> attention_weights(const ParamStore<Scalar>& params, int b) {
  using decoder_names::block;
  return {params.matrix(block(b, "attn.qkv.weight")), params.vec(block(b, "attn.qkv.bias")),
          params.matrix(block(b, "attn.out.weight")), params.vec(block(b, "attn.out.bias"))};
}

}  // namespace detail

/// fused: [N*hw, width] for one sequence. Returns per-token logits [N*hw, P*P].
template <typename Scalar>
Matrix<Scalar> decode(const ConstMatrixRef<Scalar>& fused, Index frames, const TokenGrid& grid,
                      const ParamStore<Scalar>& params, const DecoderConfig& cfg, DecoderCache<Scalar>* cache = nullptr) {
  using namespace decoder_names;
  const Index hw = grid.tokens();
  if (fused.cols() != cfg.width) {
    throw ShapeError("decoder: fused width " + std::to_string(fused.cols()) + " does not match model width " +
                     std::to_string(cfg.width));
  }
  if (fused.rows() != frames * hw) throw ShapeError("decoder: token count does not match frames x grid");
  if (frames > cfg.max_frames) throw ShapeError("decoder: more frames than the temporal table holds");
  if (grid.patch != cfg.patch) throw ShapeError("decoder: grid patch does not match the head");

  Matrix<Scalar> x = fused;
  if (cfg.positional) {
    const Matrix<Scalar> spatial = spatial_encoding<Scalar>(grid, cfg.width);
    const auto temporal = params.matrix(kTemporal);
    for (Index t = 0; t < frames; ++t) {
      x.middleRows(t * hw, hw) += spatial;
      x.middleRows(t * hw, hw).rowwise() += temporal.row(t);
    }
  }

  DecoderCache<Scalar> local;
  DecoderCache<Scalar>& c = cache ? *cache : local;
  c.frames = frames;
  c.blocks.resize(static_cast<std::size_t>(cfg.layers));
  for (int b = 0; b < cfg.layers; ++b) {
    auto& bc = c.blocks[static_cast<std::size_t>(b)];
    bc.input = x;
    const Matrix<Scalar> normed =
        layer_norm<Scalar>(x, params.vec(block(b, "ln1.gamma")), params.vec(block(b, "ln1.beta")), bc.ln1);
    bc.middle = x + attention<Scalar>(normed, detail::attention_weights(params, b), cfg.heads, bc.attn);
    bc.ffn_input =
        layer_norm<Scalar>(bc.middle, params.vec(block(b, "ln2.gamma")), params.vec(block(b, "ln2.beta")), bc.ln2);
    bc.ffn_hidden = linear<Scalar>(bc.ffn_input, params.matrix(block(b, "ffn.fc1.weight")), params.vec(block(b, "ffn.fc1.bias")));
    x = bc.middle + linear<Scalar>(relu<Scalar>(bc.ffn_hidden), params.matrix(block(b, "ffn.fc2.weight")),
                                   params.vec(block(b, "ffn.fc2.bias")));
  }
  c.head_input = layer_norm<Scalar>(x, params.vec(kNormGamma), params.vec(kNormBeta), c.norm);
  return linear<Scalar>(c.head_input, params.matrix(kHeadWeight), params.vec(kHeadBias));
}

/// Accumulates decoder parameter gradients; returns dL/dfused.
template <typename Scalar>
Matrix<Scalar> decode_backward(const DecoderCache<Scalar>& c, ParamStore<Scalar>& params, const DecoderConfig& cfg,
                               const TokenGrid& grid, const ConstMatrixRef<Scalar>& dlogits) {
  using namespace decoder_names;
  const Matrix<Scalar> dhead = linear_backward<Scalar>(c.head_input, params.matrix(kHeadWeight), dlogits,
                                                       params.grad_matrix(kHeadWeight), params.grad_vec(kHeadBias));
  Matrix<Scalar> dx =
      layer_norm_backward<Scalar>(c.norm, params.vec(kNormGamma), dhead, params.grad_vec(kNormGamma), params.grad_vec(kNormBeta));
  for (int b = cfg.layers - 1; b >= 0; --b) {
    const auto& bc = c.blocks[static_cast<std::size_t>(b)];
    // x_out = middle + fc2(relu(fc1(ln2(middle))))
    const Matrix<Scalar> activated = relu<Scalar>(bc.ffn_hidden);
    const Matrix<Scalar> dactivated =
        linear_backward<Scalar>(activated, params.matrix(block(b, "ffn.fc2.weight")), dx,
                                params.grad_matrix(block(b, "ffn.fc2.weight")), params.grad_vec(block(b, "ffn.fc2.bias")));
    const Matrix<Scalar> dffn_in = linear_backward<Scalar>(
        bc.ffn_input, params.matrix(block(b, "ffn.fc1.weight")), relu_backward<Scalar>(bc.ffn_hidden, dactivated),
        params.grad_matrix(block(b, "ffn.fc1.weight")), params.grad_vec(block(b, "ffn.fc1.bias")));
    Matrix<Scalar> dmiddle = dx + layer_norm_backward<Scalar>(bc.ln2, params.vec(block(b, "ln2.gamma")), dffn_in,
                                                              params.grad_vec(block(b, "ln2.gamma")),
                                                              params.grad_vec(block(b, "ln2.beta")));
    // middle = input + attn(ln1(input))
    AttentionGrads<Scalar> g{params.grad_matrix(block(b, "attn.qkv.weight")), params.grad_vec(block(b, "attn.qkv.bias")),
                             params.grad_matrix(block(b, "attn.out.weight")), params.grad_vec(block(b, "attn.out.bias"))};
    const Matrix<Scalar> dnormed = attention_backward<Scalar>(bc.attn, detail::attention_weights(params, b), cfg.heads, dmiddle, g);
    dx = dmiddle + layer_norm_backward<Scalar>(bc.ln1, params.vec(block(b, "ln1.gamma")), dnormed,
                                               params.grad_vec(block(b, "ln1.gamma")), params.grad_vec(block(b, "ln1.beta")));
  }
  if (cfg.positional) {
    const Index hw = grid.tokens();
    auto dtemporal = params.grad_matrix(kTemporal);
    for (Index t = 0; t < c.frames; ++t) dtemporal.row(t) += dx.middleRows(t * hw, hw).colwise().sum();
  }
  return dx;
}

/// Decodes several sequences; attention never crosses sequence boundaries.
template <typename Scalar>
std::vector<Matrix<Scalar>> decode_batch(const std::vector<Matrix<Scalar>>& fused, const std::vector<Index>& frames,
                                         const TokenGrid& grid, const ParamStore<Scalar>& params, const DecoderConfig& cfg) {
  std::vector<Matrix<Scalar>> logits;
  logits.reserve(fused.size());
  for (std::size_t i = 0; i < fused.size(); ++i) logits.push_back(decode<Scalar>(fused[i], frames[i], grid, params, cfg));
  return logits;
}

/// Pixel-shuffles per-token logits into per-frame probabilities [N, H*W].
template <typename Scalar>
Matrix<Scalar> to_mask(const ConstMatrixRef<Scalar>& logits, Index frames, const TokenGrid& grid) {
  const int p = grid.patch;
  if (logits.rows() != frames * grid.tokens() || logits.cols() != static_cast<Index>(p) * p) {
    throw ShapeError("to_mask: logits do not match frames x grid x patch^2");
  }
  const int height = grid.image_height();
  const int width = grid.image_width();
  Matrix<Scalar> probs(frames, static_cast<Index>(height) * width);
  for (Index t = 0; t < frames; ++t) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Index token = t * grid.tokens() + (y / p) * grid.cols + (x / p);
        probs(t, static_cast<Index>(y) * width + x) = sigmoid(logits(token, (y % p) * p + (x % p)));
      }
    }
  }
  return probs;
}

/// Adjoint of to_mask given its output probabilities.
template <typename Scalar>
Matrix<Scalar> to_mask_backward(const ConstMatrixRef<Scalar>& probs, const ConstMatrixRef<Scalar>& dprobs,
                                const TokenGrid& grid) {
  const int p = grid.patch;
  const int height = grid.image_height();
  const int width = grid.image_width();
  const Index frames = probs.rows();
  Matrix<Scalar> dlogits(frames * grid.tokens(), static_cast<Index>(p) * p);
  for (Index t = 0; t < frames; ++t) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const Index pixel = static_cast<Index>(y) * width + x;
        const Scalar s = probs(t, pixel);
        dlogits(t * grid.tokens() + (y / p) * grid.cols + (x / p), (y % p) * p + (x % p)) = dprobs(t, pixel) * s * (Scalar(1) - s);
      }
    }
  }
  return dlogits;
}

/// Coarse per-frame probabilities [N, height*width].
struct CoarseMasks {
  MatrixF probs;
  int height = 0;
  int width = 0;
};

/// Receives the frames and coarse masks; returns refined masks [N, H*W] at
/// frame resolution.
using RefinementHook = std::function<MatrixF(const std::vector<RgbImage>& frames, const CoarseMasks& coarse)>;

/// Bilinear upsample to the frame size, then binarize (> 0.5 maps to 1).
MatrixF default_refiner(const std::vector<RgbImage>& frames, const CoarseMasks& coarse);

/// Runs the hook (default_refiner when empty) and checks the output shape.
MatrixF refine(const std::vector<RgbImage>& frames, const CoarseMasks& coarse, const RefinementHook& hook = {});

}  // namespace geomotion
