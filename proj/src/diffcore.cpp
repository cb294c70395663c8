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

#include "geomotion/diffcore.hpp"

#include <algorithm>
#include <cmath>

namespace geomotion {

double grad_check(const Objective& objective, const Eigen::VectorXd& point, double epsilon) {
  if (!(epsilon > 0)) throw ConfigError("grad_check: epsilon must be positive");
  Eigen::VectorXd analytic = Eigen::VectorXd::Zero(point.size());
  const double center = objective(point, &analytic);
  if (!std::isfinite(center)) throw NumericError("grad_check: objective is not finite at the probe point");
  if (analytic.size() != point.size()) throw ShapeError("grad_check: gradient size does not match the point");

  double worst = 0.0;
  Eigen::VectorXd probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + epsilon;
    const double plus = objective(probe, nullptr);
    probe[i] = point[i] - epsilon;
    const double minus = objective(probe, nullptr);
    probe[i] = point[i];
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("grad_check: objective is not finite near coordinate " + std::to_string(i));
    }
    const double numeric = (plus - minus) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace geomotion
