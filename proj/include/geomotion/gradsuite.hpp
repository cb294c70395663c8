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

#include <cstdint>
#include <string>
#include <vector>

namespace geomotion {

struct GradCheckRow {
  std::string name;
  double error = 0.0;  // max relative error over all probed points
  double seconds = 0.0;
  bool passed = false;
};

/// Finite-difference checks, in double precision, of every differentiable op
/// and of the composed model pieces, each at `points` random points.
std::vector<GradCheckRow> run_gradcheck_suite(double tolerance = 1e-4, int points = 1, std::uint64_t seed = 0);

}  // namespace geomotion
