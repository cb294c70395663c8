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

#include "geomotion/core.hpp"

#include <algorithm>
#include <cmath>

namespace geomotion {

struct LossConfig {
  double focal_weight = 0.5;  // weight of the focal term
  double dice_weight = 0.5;   // weight of the dice term
  double alpha = 0.25;
  double gamma = 2.0;
  double dice_smooth = 1.0;
  double clamp = 1e-7;

  void validate() const {
    if (focal_weight < 0 || dice_weight < 0) throw ConfigError("loss weights must be non-negative");
    if (gamma < 0) throw ConfigError("focal gamma must be non-negative");
    if (alpha < 0 || alpha > 1) throw ConfigError("focal alpha must lie in [0, 1]");
    if (!(dice_smooth > 0)) throw ConfigError("dice smoothing must be positive");
  }
};

/// Pixel-mean focal loss of one frame: mean of -a_t (1 - p_t)^gamma log p_t,
/// with p clamped to [clamp, 1 - clamp]. Optionally writes dL/dprob.
template <typename Scalar, typename ProbExpr, typename GtExpr>
Scalar focal_loss(const Eigen::MatrixBase<ProbExpr>& probs, const Eigen::MatrixBase<GtExpr>& gt, double alpha,
                  double gamma, double clamp = 1e-7, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* grad = nullptr) {
  if (probs.size() != gt.size()) throw ShapeError("focal_loss: prediction and ground truth differ in size");
  const Index n = probs.size();
  if (grad) grad->resize(n);
  if (n == 0) return Scalar(0);
  const Scalar lo = Scalar(clamp);
  const Scalar hi = Scalar(1) - Scalar(clamp);
  Scalar total(0);
  for (Index i = 0; i < n; ++i) {
    const Scalar raw = probs.derived().coeff(i);
    const Scalar p = std::clamp(raw, lo, hi);
    const bool positive = gt.derived().coeff(i) > Scalar(0.5);
    const Scalar pt = positive ? p : Scalar(1) - p;
    const Scalar at = Scalar(positive ? alpha : 1.0 - alpha);
    const Scalar one_minus = Scalar(1) - pt;
    const Scalar modulator = std::pow(one_minus, Scalar(gamma));
    total += -at * modulator * std::log(pt);
    if (grad) {
      // d/dpt [-(1-pt)^g log pt] = g (1-pt)^(g-1) log pt - (1-pt)^g / pt
      const Scalar dmod = gamma == 0.0 ? Scalar(0) : Scalar(gamma) * std::pow(one_minus, Scalar(gamma - 1.0));
      Scalar dpt = at * (dmod * std::log(pt) - modulator / pt);
      if (raw < lo || raw > hi) dpt = Scalar(0);
      (*grad)[i] = (positive ? dpt : -dpt) / Scalar(n);
    }
  }
  return total / Scalar(n);
}

/// 1 - (2 sum(M G) + eps) / (sum(M) + sum(G) + eps). Optionally writes dL/dprob.
template <typename Scalar, typename ProbExpr, typename GtExpr>
Scalar dice_loss(const Eigen::MatrixBase<ProbExpr>& probs, const Eigen::MatrixBase<GtExpr>& gt, double smooth,
                 Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* grad = nullptr) {
  if (probs.size() != gt.size()) throw ShapeError("dice_loss: prediction and ground truth differ in size");
  Scalar overlap(0);
  Scalar pred_sum(0);
  Scalar gt_sum(0);
  for (Index i = 0; i < probs.size(); ++i) {
    const Scalar p = probs.derived().coeff(i);
    const Scalar g = gt.derived().coeff(i);
    overlap += p * g;
    pred_sum += p;
    gt_sum += g;
  }
  const Scalar numerator = Scalar(2) * overlap + Scalar(smooth);
  const Scalar denominator = pred_sum + gt_sum + Scalar(smooth);
  if (grad) {
    grad->resize(probs.size());
    for (Index i = 0; i < probs.size(); ++i) {
      const Scalar g = gt.derived().coeff(i);
      (*grad)[i] = -(Scalar(2) * g * denominator - numerator) / (denominator * denominator);
    }
  }
  return Scalar(1) - numerator / denominator;
}

/// Sum over frames (rows) of focal_weight * focal + dice_weight * dice.
/// probs and gt are [N, H*W]; optionally writes dL/dprobs.
template <typename Scalar>
Scalar total_loss(const ConstMatrixRef<Scalar>& probs, const ConstMatrixRef<Scalar>& gt, const LossConfig& cfg,
                  Matrix<Scalar>* dprobs = nullptr) {
  if (probs.rows() != gt.rows()) throw ShapeError("total_loss: frame counts differ");
  if (probs.cols() != gt.cols()) throw ShapeError("total_loss: frame sizes differ");
  if (probs.rows() < 1) throw ShapeError("total_loss: needs at least one frame");
  if (dprobs) dprobs->resize(probs.rows(), probs.cols());
  Scalar total(0);
  Vector<Scalar> focal_grad;
  Vector<Scalar> dice_grad;
  for (Index t = 0; t < probs.rows(); ++t) {
    const auto p = probs.row(t).transpose();
    const auto g = gt.row(t).transpose();
    const Scalar focal = focal_loss<Scalar>(p, g, cfg.alpha, cfg.gamma, cfg.clamp, dprobs ? &focal_grad : nullptr);
    const Scalar dice = dice_loss<Scalar>(p, g, cfg.dice_smooth, dprobs ? &dice_grad : nullptr);
    total += Scalar(cfg.focal_weight) * focal + Scalar(cfg.dice_weight) * dice;
    if (dprobs) {
      dprobs->row(t) = (Scalar(cfg.focal_weight) * focal_grad + Scalar(cfg.dice_weight) * dice_grad).transpose();
    }
  }
  return total;
}

}  // namespace geomotion
