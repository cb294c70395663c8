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


// Brute-force references for the segmentation metrics.

#pragma once

#include "geomotion/dataio.hpp"

#include "support.hpp"

#include <array>
#include <random>
#include <vector>

namespace geomotion::testing {

inline double brute_j(const BinaryMask& a, const BinaryMask& b) {
  int both = 0;
  int only_a = 0;
  int only_b = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const bool p = a.at(x, y);
      const bool g = b.at(x, y);
      both += p && g;
      only_a += p && !g;
      only_b += !p && g;
    }
  }
  const int total = both + only_a + only_b;
  return total == 0 ? 1.0 : static_cast<double>(both) / total;
}

inline std::vector<std::array<int, 2>> brute_boundary(const BinaryMask& m) {
  std::vector<std::array<int, 2>> out;
  const auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y); };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!fg(x, y)) continue;
      if (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1)) out.push_back({x, y});
    }
  }
  return out;
}

// Fraction of `from` boundary pixels with some `to` boundary pixel within the tolerance disk.
inline double matched_fraction(const std::vector<std::array<int, 2>>& from, const std::vector<std::array<int, 2>>& to, int tol) {
  int matched = 0;
  for (const auto& p : from) {
    for (const auto& q : to) {
      const int dx = p[0] - q[0];
      const int dy = p[1] - q[1];
      if (dx * dx + dy * dy <= tol * tol) {
        ++matched;
        break;
      }
    }
  }
  return static_cast<double>(matched) / static_cast<double>(from.size());
}

inline double brute_f(const BinaryMask& pred, const BinaryMask& gt, int tol) {
  const auto bp = brute_boundary(pred);
  const auto bg = brute_boundary(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  if (bp.empty() || bg.empty()) return 0.0;
  const double precision = matched_fraction(bp, bg, tol);
  const double recall = matched_fraction(bg, bp, tol);
  if (precision + recall == 0.0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

// Random union of rectangles; gives boundaries with realistic structure.
inline BinaryMask blob_mask(std::mt19937_64& rng, int size) {
  std::uniform_int_distribution<int> pos(0, size - 1);
  std::uniform_int_distribution<int> extent(2, size / 2);
  BinaryMask mask(size, size);
  const int count = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < count; ++i) {
    const BinaryMask r = rect_mask(size, size, pos(rng), pos(rng), extent(rng), extent(rng));
    for (std::size_t k = 0; k < mask.values.size(); ++k) mask.values[k] |= r.values[k];
  }
  return mask;
}

}  // namespace geomotion::testing
