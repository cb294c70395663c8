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

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace geomotion {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Dense per-pixel displacement field, interleaved (u, v), row-major.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> vectors;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), vectors(static_cast<std::size_t>(w) * h * 2, 0.0f) {}

  float& u(int x, int y) { return vectors[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float& v(int x, int y) { return vectors[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }
  float u(int x, int y) const { return vectors[2 * (static_cast<std::size_t>(y) * width + x)]; }
  float v(int x, int y) const { return vectors[2 * (static_cast<std::size_t>(y) * width + x) + 1]; }

  /// Throws DataError when the payload length or any component is invalid.
  void validate() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// Per-pixel {0,1} labels.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// 8-bit interleaved RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[3 * (static_cast<std::size_t>(y) * width + x) + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[3 * (static_cast<std::size_t>(y) * width + x) + c]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// 8-bit single-channel image (probability masks are stored this way).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

enum class DType : std::uint8_t { Float32 = 1 };

/// Self-describing tensor container ("GMT1").
struct TensorFile {
  DType dtype = DType::Float32;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const;

  friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

// Middlebury .flo: f32 202021.25, i32 width, i32 height, then (u,v) f32 pairs.
inline constexpr float kFloMagic = 202021.25f;

std::size_t write_flo(const FlowField& flow, const fs::path& destination);
FlowField read_flo(const fs::path& source);

// GMT1 layout: "GMT1", u8 dtype, u8 rank, 2 zero bytes, rank x u64 extents, payload.
std::vector<std::uint8_t> encode_tensor(const TensorFile& tensor);
TensorFile decode_tensor(std::span<const std::uint8_t> bytes);
std::size_t write_tensor(const TensorFile& tensor, const fs::path& destination);
TensorFile read_tensor(const fs::path& source);

/// Foreground stored as 255, background as 0.
void write_mask_png(const BinaryMask& mask, const fs::path& destination);
/// Any stored value > 127 maps to 1. Rejects multi-channel and 16-bit files.
BinaryMask read_mask_png(const fs::path& source);

void write_gray_png(const GrayImage& image, const fs::path& destination);
GrayImage read_gray_png(const fs::path& source);

void write_rgb_png(const RgbImage& image, const fs::path& destination);
/// Accepts 8-bit gray, gray+alpha, RGB and RGBA; always returns RGB.
RgbImage read_rgb_png(const fs::path& source);

json read_json(const fs::path& source);
void write_json(const json& value, const fs::path& destination);

std::vector<std::uint8_t> read_bytes(const fs::path& source);
void write_bytes(std::span<const std::uint8_t> bytes, const fs::path& destination);

/// A checkpoint is a directory holding manifest.json and one GMT1 file per
/// named tensor. `meta` is stored verbatim under the manifest's "meta" key.
struct Checkpoint {
  json meta = json::object();
  std::vector<std::pair<std::string, TensorFile>> tensors;

  const TensorFile* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& directory);
Checkpoint load_checkpoint(const fs::path& directory);

/// Zero-padded frame file stem, e.g. 7 -> "000007".
std::string frame_stem(std::size_t index);

}  // namespace geomotion
