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

// Differentiable building blocks with hand-written adjoints.
//
// Every op is a pair of free functions: `op(...)` computes the forward value
// (optionally filling a cache) and `op_backward(...)` maps an upstream
// gradient to input gradients, accumulating parameter gradients in place.
// All ops are templated on the scalar so the same code trains in float and
// is verified in double.

#pragma once

#include "geomotion/core.hpp"
#include "geomotion/dataio.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace geomotion {

// ---------------------------------------------------------------------------
// Parameters

template <typename Scalar>
struct Tensor {
  std::vector<Index> shape;
  Vector<Scalar> value;
  Vector<Scalar> grad;

  Index size() const { return value.size(); }
};

/// Named parameters in insertion order. Iteration order is what checkpoints
/// and optimizers see, so it must never depend on hashing.
template <typename Scalar>
class ParamStore {
 public:
  Tensor<Scalar>& add(const std::string& name, std::vector<Index> shape) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    const Index count = std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Tensor<Scalar>{std::move(shape), Vector<Scalar>::Zero(count), Vector<Scalar>::Zero(count)}});
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Tensor<Scalar>& at(const std::string& name) { return entries_[lookup(name)].second; }
  const Tensor<Scalar>& at(const std::string& name) const { return entries_[lookup(name)].second; }

  /// Parameter viewed as [shape[0], product(shape[1:])].
  MatrixMap<Scalar> matrix(const std::string& name) { return as_matrix(at(name).value, at(name).shape); }
  ConstMatrixMap<Scalar> matrix(const std::string& name) const { return as_matrix(at(name).value, at(name).shape); }
  MatrixMap<Scalar> grad_matrix(const std::string& name) { return as_matrix(at(name).grad, at(name).shape); }

  Vector<Scalar>& vec(const std::string& name) { return at(name).value; }
  const Vector<Scalar>& vec(const std::string& name) const { return at(name).value; }
  Vector<Scalar>& grad_vec(const std::string& name) { return at(name).grad; }

  void zero_grad() {
    for (auto& [name, tensor] : entries_) tensor.grad.setZero();
  }

  Index total_size() const {
    Index total = 0;
    for (const auto& [name, tensor] : entries_) total += tensor.size();
    return total;
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, tensor] : entries_) {
      auto& copy = out.add(name, tensor.shape);
      copy.value = tensor.value.template cast<Other>();
    }
    return out;
  }

  /// Flattened values in iteration order (used by the gradient checker).
  Vector<Scalar> flatten() const {
    Vector<Scalar> flat(total_size());
    Index offset = 0;
    for (const auto& [name, tensor] : entries_) {
      flat.segment(offset, tensor.size()) = tensor.value;
      offset += tensor.size();
    }
    return flat;
  }

  Vector<Scalar> flatten_grad() const {
    Vector<Scalar> flat(total_size());
    Index offset = 0;
    for (const auto& [name, tensor] : entries_) {
      flat.segment(offset, tensor.size()) = tensor.grad;
      offset += tensor.size();
    }
    return flat;
  }

  void unflatten(const Vector<Scalar>& flat) {
    Index offset = 0;
    for (auto& [name, tensor] : entries_) {
      tensor.value = flat.segment(offset, tensor.size());
      offset += tensor.size();
    }
  }

 private:
  static MatrixMap<Scalar> as_matrix(Vector<Scalar>& data, const std::vector<Index>& shape) {
    const Index rows = shape.empty() ? 1 : shape[0];
    return MatrixMap<Scalar>(data.data(), rows, rows == 0 ? 0 : data.size() / rows);
  }
  static ConstMatrixMap<Scalar> as_matrix(const Vector<Scalar>& data, const std::vector<Index>& shape) {
    const Index rows = shape.empty() ? 1 : shape[0];
    return ConstMatrixMap<Scalar>(data.data(), rows, rows == 0 ? 0 : data.size() / rows);
  }
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, Tensor<Scalar>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
TensorFile to_tensor_file(const Tensor<Scalar>& tensor, bool gradient = false) {
  TensorFile file;
  file.shape.assign(tensor.shape.begin(), tensor.shape.end());
  const auto& source = gradient ? tensor.grad : tensor.value;
  file.data.resize(static_cast<std::size_t>(source.size()));
  for (Index i = 0; i < source.size(); ++i) file.data[static_cast<std::size_t>(i)] = static_cast<float>(source[i]);
  return file;
}

template <typename Scalar>
void assign_from(Tensor<Scalar>& tensor, const TensorFile& file, const std::string& name) {
  if (file.shape.size() != tensor.shape.size() ||
      !std::equal(file.shape.begin(), file.shape.end(), tensor.shape.begin(),
                  [](std::uint64_t a, Index b) { return a == static_cast<std::uint64_t>(b); })) {
    throw ShapeError("tensor '" + name + "' has an incompatible shape");
  }
  for (Index i = 0; i < tensor.value.size(); ++i) tensor.value[i] = static_cast<Scalar>(file.data[static_cast<std::size_t>(i)]);
}

/// Glorot-uniform fill for a [fan_out, fan_in] weight.
template <typename Scalar>
void glorot_uniform(Tensor<Scalar>& tensor, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < tensor.value.size(); ++i) tensor.value[i] = static_cast<Scalar>(dist(rng));
}

// ---------------------------------------------------------------------------
// Dense linear map: y = x W^T + b, W is [out, in].

template <typename Scalar>
Matrix<Scalar> linear(const ConstMatrixRef<Scalar>& x, const ConstMatrixRef<Scalar>& weight, const Vector<Scalar>& bias) {
  if (x.cols() != weight.cols()) throw ShapeError("linear: input width does not match weight");
  Matrix<Scalar> y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

/// Returns dL/dx; accumulates dL/dW and dL/db.
template <typename Scalar>
Matrix<Scalar> linear_backward(const ConstMatrixRef<Scalar>& x, const ConstMatrixRef<Scalar>& weight,
                               const ConstMatrixRef<Scalar>& dy, MatrixMap<Scalar> dweight, Vector<Scalar>& dbias) {
  dweight.noalias() += dy.transpose() * x;
  dbias.noalias() += dy.colwise().sum().transpose();
  return dy * weight;
}

// ---------------------------------------------------------------------------
// Pointwise

template <typename Scalar>
Matrix<Scalar> relu(const ConstMatrixRef<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const ConstMatrixRef<Scalar>& pre, const ConstMatrixRef<Scalar>& dy) {
  return (pre.array() > Scalar(0)).select(dy.array(), Scalar(0)).matrix();
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

template <typename Scalar>
Matrix<Scalar> sigmoid(const ConstMatrixRef<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

/// Takes the forward output y = sigmoid(x).
template <typename Scalar>
Matrix<Scalar> sigmoid_backward(const ConstMatrixRef<Scalar>& y, const ConstMatrixRef<Scalar>& dy) {
  return (dy.array() * y.array() * (Scalar(1) - y.array())).matrix();
}

/// Row-wise softmax, max-shifted, in place.
template <typename Scalar>
void softmax_rows_inplace(MatrixRef<Scalar> y) {
  for (Index r = 0; r < y.rows(); ++r) y.row(r).array() -= y.row(r).maxCoeff();
  y.array() = y.array().exp();
  for (Index r = 0; r < y.rows(); ++r) y.row(r) /= y.row(r).sum();
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const ConstMatrixRef<Scalar>& x) {
  Matrix<Scalar> y = x;
  softmax_rows_inplace<Scalar>(y);
  return y;
}

/// Overwrites dy with dL/dx given the forward output y.
template <typename Scalar>
void softmax_rows_backward_inplace(const ConstMatrixRef<Scalar>& y, MatrixRef<Scalar> dy) {
  for (Index r = 0; r < y.rows(); ++r) {
    const Scalar dot = y.row(r).dot(dy.row(r));
    dy.row(r).array() = y.row(r).array() * (dy.row(r).array() - dot);
  }
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const ConstMatrixRef<Scalar>& y, const ConstMatrixRef<Scalar>& dy) {
  Matrix<Scalar> dx = dy;
  softmax_rows_backward_inplace<Scalar>(y, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// Layer normalization over the channel axis of [tokens, channels].

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;
  Vector<Scalar> inv_std;
};

template <typename Scalar>
Matrix<Scalar> layer_norm(const ConstMatrixRef<Scalar>& x, const Vector<Scalar>& gamma, const Vector<Scalar>& beta,
                          LayerNormCache<Scalar>& cache, Scalar eps = Scalar(1e-5)) {
  const Index width = x.cols();
  const Vector<Scalar> mean = x.rowwise().mean();
  cache.normalized = x.colwise() - mean;
  const Vector<Scalar> var = cache.normalized.array().square().rowwise().sum() / Scalar(width);
  cache.inv_std = (var.array() + eps).rsqrt();
  cache.normalized.array().colwise() *= cache.inv_std.array();
  Matrix<Scalar> y = (cache.normalized.array().rowwise() * gamma.transpose().array()).matrix();
  y.rowwise() += beta.transpose();
  return y;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const Vector<Scalar>& gamma,
                                   const ConstMatrixRef<Scalar>& dy, Vector<Scalar>& dgamma, Vector<Scalar>& dbeta) {
  const Index width = dy.cols();
  dgamma.noalias() += (dy.array() * cache.normalized.array()).colwise().sum().matrix().transpose();
  dbeta.noalias() += dy.colwise().sum().transpose();
  const Matrix<Scalar> dnorm = (dy.array().rowwise() * gamma.transpose().array()).matrix();
  const Vector<Scalar> sum_d = dnorm.rowwise().sum();
  const Vector<Scalar> sum_dn = (dnorm.array() * cache.normalized.array()).rowwise().sum();
  Matrix<Scalar> dx = ((Scalar(width) * dnorm.array()).colwise() - sum_d.array()).matrix();
  dx.array() -= cache.normalized.array().colwise() * sum_dn.array();
  dx.array().colwise() *= cache.inv_std.array() / Scalar(width);
  return dx;
}

// ---------------------------------------------------------------------------
// Multi-head scaled-dot-product self-attention over all rows of x.

template <typename Scalar>
struct AttentionWeights {
  ConstMatrixRef<Scalar> qkv_weight;  // [3d, d]
  const Vector<Scalar>& qkv_bias;     // [3d]
  ConstMatrixRef<Scalar> out_weight;  // [d, d]
  const Vector<Scalar>& out_bias;     // [d]
};

template <typename Scalar>
struct AttentionGrads {
  MatrixMap<Scalar> qkv_weight;
  Vector<Scalar>& qkv_bias;
  MatrixMap<Scalar> out_weight;
  Vector<Scalar>& out_bias;
};

template <typename Scalar>
struct AttentionCache {
  Matrix<Scalar> input;
  Matrix<Scalar> qkv;                 // [T, 3d]
  std::vector<Matrix<Scalar>> probs;  // per head [T, T]
  Matrix<Scalar> context;             // [T, d]
};

template <typename Scalar>
Matrix<Scalar> attention(const ConstMatrixRef<Scalar>& x, const AttentionWeights<Scalar>& w, Index heads,
                         AttentionCache<Scalar>& cache) {
  const Index tokens = x.rows();
  const Index width = x.cols();
  if (heads <= 0 || width % heads != 0) throw ShapeError("attention: heads must divide the model width");
  const Index head_dim = width / heads;
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(head_dim));
  cache.input = x;
  cache.qkv = linear<Scalar>(x, w.qkv_weight, w.qkv_bias);
  cache.context.resize(tokens, width);
  cache.probs.resize(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    const auto q = cache.qkv.middleCols(h * head_dim, head_dim);
    const auto k = cache.qkv.middleCols(width + h * head_dim, head_dim);
    const auto v = cache.qkv.middleCols(2 * width + h * head_dim, head_dim);
    // Probabilities are computed in the cached buffer so repeated calls reuse its storage.
    auto& probs = cache.probs[static_cast<std::size_t>(h)];
    probs.resize(tokens, tokens);
    probs.noalias() = q * k.transpose();
    probs *= scale;
    softmax_rows_inplace<Scalar>(probs);
    cache.context.middleCols(h * head_dim, head_dim).noalias() = probs * v;
  }
  return linear<Scalar>(cache.context, w.out_weight, w.out_bias);
}

template <typename Scalar>
Matrix<Scalar> attention_backward(const AttentionCache<Scalar>& cache, const AttentionWeights<Scalar>& w, Index heads,
                                  const ConstMatrixRef<Scalar>& dy, AttentionGrads<Scalar>& g) {
  const Index tokens = dy.rows();
  const Index width = dy.cols();
  const Index head_dim = width / heads;
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(head_dim));
  const Matrix<Scalar> dcontext = linear_backward<Scalar>(cache.context, w.out_weight, dy, g.out_weight, g.out_bias);
  Matrix<Scalar> dqkv(tokens, 3 * width);
  Matrix<Scalar> dscores(tokens, tokens);
  for (Index h = 0; h < heads; ++h) {
    const auto q = cache.qkv.middleCols(h * head_dim, head_dim);
    const auto k = cache.qkv.middleCols(width + h * head_dim, head_dim);
    const auto v = cache.qkv.middleCols(2 * width + h * head_dim, head_dim);
    const auto& probs = cache.probs[static_cast<std::size_t>(h)];
    const auto dctx = dcontext.middleCols(h * head_dim, head_dim);
    dqkv.middleCols(2 * width + h * head_dim, head_dim).noalias() = probs.transpose() * dctx;
    dscores.noalias() = dctx * v.transpose();
    softmax_rows_backward_inplace<Scalar>(probs, dscores);
    dscores *= scale;
    dqkv.middleCols(h * head_dim, head_dim).noalias() = dscores * k;
    dqkv.middleCols(width + h * head_dim, head_dim).noalias() = dscores.transpose() * q;
  }
  return linear_backward<Scalar>(cache.input, w.qkv_weight, dqkv, g.qkv_weight, g.qkv_bias);
}

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero "same" padding.
// Planes are [channels, height*width]; weight is [out, in*9] laid out as
// (in, ky, kx), bias is [out].

namespace detail {

/// dst(c, y, x) = src(c, y+dy, x+dx), zero outside the image.
template <typename Scalar>
void shift_planes(const ConstMatrixRef<Scalar>& src, int height, int width, int dy, int dx, Matrix<Scalar>& dst) {
  dst.setZero(src.rows(), src.cols());
  const int x0 = std::max(0, -dx);
  const int x1 = std::min(width, width - dx);
  if (x1 <= x0) return;
  for (Index c = 0; c < src.rows(); ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = y + dy;
      if (sy < 0 || sy >= height) continue;
      dst.row(c).segment(static_cast<Index>(y) * width + x0, x1 - x0) =
          src.row(c).segment(static_cast<Index>(sy) * width + x0 + dx, x1 - x0);
    }
  }
}

/// dst(c, y+dy, x+dx) += src(c, y, x) for in-bounds targets; adjoint of shift_planes.
template <typename Scalar>
void unshift_add_planes(const ConstMatrixRef<Scalar>& src, int height, int width, int dy, int dx, Matrix<Scalar>& dst) {
  const int x0 = std::max(0, -dx);
  const int x1 = std::min(width, width - dx);
  if (x1 <= x0) return;
  for (Index c = 0; c < src.rows(); ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = y + dy;
      if (sy < 0 || sy >= height) continue;
      dst.row(c).segment(static_cast<Index>(sy) * width + x0 + dx, x1 - x0) +=
          src.row(c).segment(static_cast<Index>(y) * width + x0, x1 - x0);
    }
  }
}

template <typename Scalar>
Matrix<Scalar> tap_weight(const ConstMatrixRef<Scalar>& weight, Index in_channels, int tap) {
  Matrix<Scalar> w(weight.rows(), in_channels);
  for (Index ci = 0; ci < in_channels; ++ci) w.col(ci) = weight.col(ci * 9 + tap);
  return w;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> conv3x3(const ConstMatrixRef<Scalar>& x, int height, int width, const ConstMatrixRef<Scalar>& weight,
                       const Vector<Scalar>& bias) {
  const Index in_channels = x.rows();
  if (x.cols() != static_cast<Index>(height) * width) throw ShapeError("conv3x3: plane size does not match image");
  if (weight.cols() != in_channels * 9) throw ShapeError("conv3x3: weight does not match input channels");
  Matrix<Scalar> y(weight.rows(), x.cols());
  y.colwise() = bias;
  Matrix<Scalar> shifted;
  for (int tap = 0; tap < 9; ++tap) {
    detail::shift_planes<Scalar>(x, height, width, tap / 3 - 1, tap % 3 - 1, shifted);
    y.noalias() += detail::tap_weight<Scalar>(weight, in_channels, tap) * shifted;
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> conv3x3_backward(const ConstMatrixRef<Scalar>& x, int height, int width,
                                const ConstMatrixRef<Scalar>& weight, const ConstMatrixRef<Scalar>& dy,
                                MatrixMap<Scalar> dweight, Vector<Scalar>& dbias) {
  const Index in_channels = x.rows();
  dbias.noalias() += dy.rowwise().sum();
  Matrix<Scalar> dx = Matrix<Scalar>::Zero(x.rows(), x.cols());
  Matrix<Scalar> shifted;
  for (int tap = 0; tap < 9; ++tap) {
    const int sy = tap / 3 - 1;
    const int sx = tap % 3 - 1;
    detail::shift_planes<Scalar>(x, height, width, sy, sx, shifted);
    const Matrix<Scalar> dw = dy * shifted.transpose();
    for (Index ci = 0; ci < in_channels; ++ci) dweight.col(ci * 9 + tap) += dw.col(ci);
    const Matrix<Scalar> dshifted = detail::tap_weight<Scalar>(weight, in_channels, tap).transpose() * dy;
    detail::unshift_add_planes<Scalar>(dshifted, height, width, sy, sx, dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Bilinear resize (half-pixel centers, edge clamped, no antialiasing).
// Separable: out_plane = Ry * plane * Rx^T.

template <typename Scalar>
Matrix<Scalar> bilinear_weights(int in_size, int out_size) {
  Matrix<Scalar> r = Matrix<Scalar>::Zero(out_size, in_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    const int i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
    const int i1 = std::min(i0 + 1, in_size - 1);
    const double frac = src - i0;
    r(o, i0) += static_cast<Scalar>(1.0 - frac);
    r(o, i1) += static_cast<Scalar>(frac);
  }
  return r;
}

template <typename Scalar>
Matrix<Scalar> bilinear_resize(const ConstMatrixRef<Scalar>& x, int height, int width, int out_height, int out_width) {
  if (x.cols() != static_cast<Index>(height) * width) throw ShapeError("bilinear_resize: plane size does not match");
  const Matrix<Scalar> ry = bilinear_weights<Scalar>(height, out_height);
  const Matrix<Scalar> rx = bilinear_weights<Scalar>(width, out_width);
  Matrix<Scalar> y(x.rows(), static_cast<Index>(out_height) * out_width);
  for (Index c = 0; c < x.rows(); ++c) {
    ConstMatrixMap<Scalar> plane(x.row(c).data(), height, width);
    MatrixMap<Scalar> out(y.row(c).data(), out_height, out_width);
    out.noalias() = ry * plane * rx.transpose();
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> bilinear_resize_backward(const ConstMatrixRef<Scalar>& dy, int height, int width, int out_height,
                                        int out_width) {
  const Matrix<Scalar> ry = bilinear_weights<Scalar>(height, out_height);
  const Matrix<Scalar> rx = bilinear_weights<Scalar>(width, out_width);
  Matrix<Scalar> dx(dy.rows(), static_cast<Index>(height) * width);
  for (Index c = 0; c < dy.rows(); ++c) {
    ConstMatrixMap<Scalar> dout(dy.row(c).data(), out_height, out_width);
    MatrixMap<Scalar> din(dx.row(c).data(), height, width);
    din.noalias() = ry.transpose() * dout * rx;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Finite-difference verification (always double precision).

/// Evaluates the objective at x; when `grad` is non-null also writes the
/// analytic gradient into it.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// max_i |analytic_i - central_i| / max(1, |analytic_i|).
/// Throws NumericError if the objective is non-finite anywhere it is probed.
double grad_check(const Objective& objective, const Eigen::VectorXd& point, double epsilon = 1e-5);

}  // namespace geomotion
