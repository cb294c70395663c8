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

#include "geomotion/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace geomotion {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float value) { put_u32(out, std::bit_cast<std::uint32_t>(value)); }

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return value;
}

std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  return value;
}

float get_f32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return std::bit_cast<float>(get_u32(bytes, offset));
}

std::string describe(const fs::path& path) { return "'" + path.string() + "'"; }

struct PngImage {
  png_image image{};
  PngImage() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

void write_png(const fs::path& destination, int width, int height, png_uint_32 format, const std::uint8_t* pixels) {
  if (width <= 0 || height <= 0) throw DataError("cannot write empty PNG " + describe(destination));
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, destination.string().c_str(), 0, pixels, 0, nullptr)) {
    throw DataError("failed to write PNG " + describe(destination) + ": " + png.image.message);
  }
}

}  // namespace

void FlowField::validate() const {
  if (width < 0 || height < 0) throw DataError("flow field has negative dimensions");
  if (vectors.size() != static_cast<std::size_t>(width) * height * 2) {
    throw DataError("flow field payload length does not match width x height x 2");
  }
  for (float value : vectors) {
    if (!std::isfinite(value)) throw DataError("flow field contains a non-finite component");
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

std::uint64_t TensorFile::element_count() const {
  std::uint64_t count = 1;
  for (std::uint64_t extent : shape) count *= extent;
  return count;
}

std::vector<std::uint8_t> read_bytes(const fs::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw DataError("cannot open " + describe(source));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(std::span<const std::uint8_t> bytes, const fs::path& destination) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + describe(destination) + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + describe(destination));
}

std::size_t write_flo(const FlowField& flow, const fs::path& destination) {
  flow.validate();
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + flow.vectors.size() * 4);
  put_f32(bytes, kFloMagic);
  put_u32(bytes, static_cast<std::uint32_t>(flow.width));
  put_u32(bytes, static_cast<std::uint32_t>(flow.height));
  for (float value : flow.vectors) put_f32(bytes, value);
  write_bytes(bytes, destination);
  return bytes.size();
}

FlowField read_flo(const fs::path& source) {
  const auto bytes = read_bytes(source);
  if (bytes.size() < 12) throw LengthError(describe(source) + " is shorter than the .flo header");
  if (get_f32(bytes, 0) != kFloMagic) throw FormatError(describe(source) + " has a bad .flo magic number");
  const auto width = static_cast<std::int32_t>(get_u32(bytes, 4));
  const auto height = static_cast<std::int32_t>(get_u32(bytes, 8));
  if (width < 0 || height < 0) throw FormatError(describe(source) + " declares negative dimensions");
  const std::uint64_t expected = 12 + static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height) * 8;
  if (bytes.size() != expected) {
    throw LengthError(describe(source) + " holds " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  FlowField flow(width, height);
  for (std::size_t i = 0; i < flow.vectors.size(); ++i) flow.vectors[i] = get_f32(bytes, 12 + 4 * i);
  return flow;
}

std::vector<std::uint8_t> encode_tensor(const TensorFile& tensor) {
  if (tensor.dtype != DType::Float32) throw FormatError("unsupported tensor dtype");
  if (tensor.shape.size() > 255) throw FormatError("tensor rank exceeds 255");
  if (tensor.data.size() != tensor.element_count()) throw LengthError("tensor payload does not match its shape");
  std::vector<std::uint8_t> bytes{'G', 'M', 'T', '1', static_cast<std::uint8_t>(tensor.dtype),
                                  static_cast<std::uint8_t>(tensor.shape.size()), 0, 0};
  bytes.reserve(8 + 8 * tensor.shape.size() + 4 * tensor.data.size());
  for (std::uint64_t extent : tensor.shape) put_u64(bytes, extent);
  for (float value : tensor.data) put_f32(bytes, value);
  return bytes;
}

TensorFile decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw LengthError("tensor file shorter than its header");
  if (std::memcmp(bytes.data(), "GMT1", 4) != 0) throw FormatError("tensor file has unknown magic");
  if (bytes[4] != static_cast<std::uint8_t>(DType::Float32)) {
    throw FormatError("tensor file has unknown dtype code " + std::to_string(bytes[4]));
  }
  TensorFile tensor;
  const std::size_t rank = bytes[5];
  if (bytes.size() < 8 + 8 * rank) throw LengthError("tensor file truncated inside its shape");
  tensor.shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) tensor.shape[i] = get_u64(bytes, 8 + 8 * i);
  const std::size_t offset = 8 + 8 * rank;
  const std::uint64_t count = tensor.element_count();
  if ((bytes.size() - offset) % 4 != 0 || (bytes.size() - offset) / 4 != count) {
    throw LengthError("tensor payload holds " + std::to_string(bytes.size() - offset) + " bytes, shape implies " +
                      std::to_string(count * 4));
  }
  tensor.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) tensor.data[i] = get_f32(bytes, offset + 4 * i);
  return tensor;
}

std::size_t write_tensor(const TensorFile& tensor, const fs::path& destination) {
  const auto bytes = encode_tensor(tensor);
  write_bytes(bytes, destination);
  return bytes.size();
}

TensorFile read_tensor(const fs::path& source) {
  const auto bytes = read_bytes(source);
  try {
    return decode_tensor(bytes);
  } catch (const LengthError& e) {
    throw LengthError(describe(source) + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(describe(source) + ": " + e.what());
  }
}

void write_mask_png(const BinaryMask& mask, const fs::path& destination) {
  std::vector<std::uint8_t> pixels(mask.values.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (mask.values[i] > 1) throw DataError("mask is not binary");
    pixels[i] = mask.values[i] ? 255 : 0;
  }
  write_png(destination, mask.width, mask.height, PNG_FORMAT_GRAY, pixels.data());
}

GrayImage read_gray_png(const fs::path& source) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, source.string().c_str())) {
    throw DataError("cannot read PNG " + describe(source) + ": " + png.image.message);
  }
  const auto format = png.image.format;
  if (format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) {
    throw FormatError(describe(source) + " is not a single-channel PNG");
  }
  if (format & PNG_FORMAT_FLAG_LINEAR) throw FormatError(describe(source) + " is a 16-bit PNG");
  png.image.format = PNG_FORMAT_GRAY;
  GrayImage image;
  image.width = static_cast<int>(png.image.width);
  image.height = static_cast<int>(png.image.height);
  image.pixels.resize(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot decode PNG " + describe(source) + ": " + png.image.message);
  }
  return image;
}

void write_gray_png(const GrayImage& image, const fs::path& destination) {
  write_png(destination, image.width, image.height, PNG_FORMAT_GRAY, image.pixels.data());
}

BinaryMask read_mask_png(const fs::path& source) {
  const GrayImage gray = read_gray_png(source);
  BinaryMask mask(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) mask.values[i] = gray.pixels[i] > 127 ? 1 : 0;
  return mask;
}

void write_rgb_png(const RgbImage& image, const fs::path& destination) {
  write_png(destination, image.width, image.height, PNG_FORMAT_RGB, image.pixels.data());
}

RgbImage read_rgb_png(const fs::path& source) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, source.string().c_str())) {
    throw DataError("cannot read PNG " + describe(source) + ": " + png.image.message);
  }
  if (png.image.format & PNG_FORMAT_FLAG_LINEAR) throw FormatError(describe(source) + " is a 16-bit PNG");
  png.image.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(png.image.width), static_cast<int>(png.image.height));
  if (!png_image_finish_read(&png.image, nullptr, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot decode PNG " + describe(source) + ": " + png.image.message);
  }
  return image;
}

json read_json(const fs::path& source) {
  std::ifstream in(source);
  if (!in) throw DataError("cannot open " + describe(source));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(describe(source) + " is not valid JSON: " + e.what());
  }
}

void write_json(const json& value, const fs::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw DataError("cannot open " + describe(destination) + " for writing");
  out << value.dump(2) << '\n';
}

const TensorFile* Checkpoint::find(const std::string& name) const {
  for (const auto& [key, tensor] : tensors) {
    if (key == name) return &tensor;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& directory) {
  fs::create_directories(directory);
  json entries = json::array();
  for (std::size_t i = 0; i < checkpoint.tensors.size(); ++i) {
    const auto& [name, tensor] = checkpoint.tensors[i];
    const std::string file = "t" + frame_stem(i) + ".gmt1";
    write_tensor(tensor, directory / file);
    entries.push_back({{"name", name}, {"file", file}, {"shape", tensor.shape}});
  }
  json manifest = {{"format", "geomotion-checkpoint"}, {"version", kVersion}, {"meta", checkpoint.meta},
                   {"tensors", entries}};
  write_json(manifest, directory / "manifest.json");
}

Checkpoint load_checkpoint(const fs::path& directory) {
  const json manifest = read_json(directory / "manifest.json");
  if (manifest.value("format", "") != "geomotion-checkpoint") {
    throw FormatError(describe(directory) + " is not a checkpoint directory");
  }
  Checkpoint checkpoint;
  checkpoint.meta = manifest.value("meta", json::object());
  for (const auto& entry : manifest.at("tensors")) {
    TensorFile tensor = read_tensor(directory / entry.at("file").get<std::string>());
    if (tensor.shape != entry.at("shape").get<std::vector<std::uint64_t>>()) {
      throw ShapeError("checkpoint tensor '" + entry.at("name").get<std::string>() +
                       "' does not match its manifest shape");
    }
    checkpoint.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(tensor));
  }
  return checkpoint;
}

std::string frame_stem(std::size_t index) {
  std::ostringstream out;
  out << std::setw(6) << std::setfill('0') << index;
  return out.str();
}

}  // namespace geomotion
