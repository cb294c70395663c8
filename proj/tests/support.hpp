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


// Shared helpers for the unit tests.

#pragma once

#include "geomotion/dataio.hpp"
#include "geomotion/model.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace geomotion::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "test") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("geomotion_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

inline BinaryMask random_mask(std::mt19937_64& rng, int width, int height, double density = 0.5) {
  std::bernoulli_distribution on(density);
  BinaryMask mask(width, height);
  for (auto& v : mask.values) v = on(rng) ? 1 : 0;
  return mask;
}

/// Axis-aligned rectangle [x0, x0+w) x [y0, y0+h) of ones.
inline BinaryMask rect_mask(int width, int height, int x0, int y0, int w, int h) {
  BinaryMask mask(width, height);
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      if (x >= 0 && y >= 0 && x < width && y < height) mask.at(x, y) = 1;
    }
  }
  return mask;
}

/// Small model for fast tests: 16x16 image, patch 8, C=4.
inline ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.patch = 8;
  cfg.channels = 4;
  cfg.flow_width = 4;
  cfg.cam_width = 4;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.ffn_mult = 2;
  cfg.max_frames = 4;
  return cfg;
}

}  // namespace geomotion::testing
