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

#include "geomotion/sequence.hpp"

#include <algorithm>
#include <cmath>

namespace geomotion {

namespace {

struct Crop {
  int x0 = 0;
  int y0 = 0;
  int side = 0;
};

Crop centered_square(int width, int height) {
  const int side = std::min(width, height);
  return {(width - side) / 2, (height - side) / 2, side};
}

// Half-pixel-center source coordinate inside the crop.
double source_coord(int out, int out_size, int side) {
  return (out + 0.5) * static_cast<double>(side) / out_size - 0.5;
}

template <typename Sample>
void bilinear_sample(double sx, double sy, int side, Sample&& sample) {
  sx = std::clamp(sx, 0.0, static_cast<double>(side - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(side - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, side - 1);
  const int y1 = std::min(y0 + 1, side - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  sample(x0, y0, (1 - fx) * (1 - fy));
  sample(x1, y0, fx * (1 - fy));
  sample(x0, y1, (1 - fx) * fy);
  sample(x1, y1, fx * fy);
}

std::vector<fs::path> sorted_files(const fs::path& directory, const std::string& extension) {
  std::vector<fs::path> files;
  if (!fs::is_directory(directory)) return files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void FrameSequence::validate() const {
  if (frames.empty()) throw DataError("sequence '" + name + "' has no frames");
  const int w = width();
  const int h = height();
  for (const auto& frame : frames) {
    if (frame.width != w || frame.height != h) throw ShapeError("sequence '" + name + "' has frames of mixed size");
  }
  if (flows.size() != frames.size()) throw DataError("sequence '" + name + "' needs one flow per frame");
  for (const auto& flow : flows) {
    if (flow.width != w || flow.height != h) throw ShapeError("sequence '" + name + "': flow/frame size mismatch");
  }
  if (!masks.empty() && masks.size() != frames.size()) throw DataError("sequence '" + name + "' is missing masks");
  for (const auto& mask : masks) {
    if (mask.width != w || mask.height != h) throw ShapeError("sequence '" + name + "': mask/frame size mismatch");
  }
  if (!camera.empty() && camera.size() != frames.size()) {
    throw DataError("sequence '" + name + "' camera track length differs from frame count");
  }
  if (!objects.empty() && objects.size() != frames.size()) {
    throw DataError("sequence '" + name + "' is missing object maps");
  }
}

std::vector<FlowField> last_frame_flow(std::vector<FlowField> pair_flows) {
  if (pair_flows.empty()) throw DataError("last_frame_flow needs at least two frames");
  pair_flows.push_back(pair_flows.back());
  return pair_flows;
}

void save_sequence(const FrameSequence& sequence, const fs::path& directory, const json& meta) {
  sequence.validate();
  fs::create_directories(directory / "frames");
  fs::create_directories(directory / "flows");
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    write_rgb_png(sequence.frames[t], directory / "frames" / (frame_stem(t) + ".png"));
  }
  for (std::size_t t = 0; t + 1 < sequence.size(); ++t) {
    write_flo(sequence.flows[t], directory / "flows" / (frame_stem(t) + ".flo"));
  }
  if (!sequence.masks.empty()) {
    fs::create_directories(directory / "masks");
    for (std::size_t t = 0; t < sequence.size(); ++t) {
      write_mask_png(sequence.masks[t], directory / "masks" / (frame_stem(t) + ".png"));
    }
  }
  if (!sequence.objects.empty()) {
    fs::create_directories(directory / "objects");
    for (std::size_t t = 0; t < sequence.size(); ++t) {
      write_mask_png(sequence.objects[t], directory / "objects" / (frame_stem(t) + ".png"));
    }
  }
  json doc = meta;
  doc["name"] = sequence.name;
  doc["frames"] = sequence.size();
  doc["width"] = sequence.width();
  doc["height"] = sequence.height();
  json camera = json::array();
  for (const auto& c : sequence.camera) camera.push_back({c.x, c.y});
  doc["camera"] = camera;
  write_json(doc, directory / "meta.json");
}

FrameSequence load_sequence(const fs::path& directory, int size) {
  FrameSequence sequence;
  sequence.name = directory.filename().string();
  for (const auto& file : sorted_files(directory / "frames", ".png")) sequence.frames.push_back(read_rgb_png(file));
  if (sequence.frames.size() < 2) throw DataError("sequence " + directory.string() + " needs at least two frames");

  std::vector<FlowField> pair_flows;
  for (const auto& file : sorted_files(directory / "flows", ".flo")) pair_flows.push_back(read_flo(file));
  if (pair_flows.size() != sequence.frames.size() - 1) {
    throw DataError("sequence " + directory.string() + " has " + std::to_string(pair_flows.size()) +
                    " flows for " + std::to_string(sequence.frames.size()) + " frames");
  }
  sequence.flows = last_frame_flow(std::move(pair_flows));
  for (const auto& file : sorted_files(directory / "masks", ".png")) sequence.masks.push_back(read_mask_png(file));
  for (const auto& file : sorted_files(directory / "objects", ".png")) sequence.objects.push_back(read_mask_png(file));
  if (fs::exists(directory / "meta.json")) {
    const json meta = read_json(directory / "meta.json");
    if (meta.contains("camera")) {
      for (const auto& c : meta["camera"]) sequence.camera.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    }
  }
  if (size > 0 && (sequence.width() != size || sequence.height() != size)) {
    const double scale = static_cast<double>(size) / centered_square(sequence.width(), sequence.height()).side;
    for (auto& frame : sequence.frames) frame = center_crop_resize(frame, size);
    for (auto& flow : sequence.flows) flow = center_crop_resize(flow, size);
    for (auto& mask : sequence.masks) mask = center_crop_resize(mask, size);
    for (auto& mask : sequence.objects) mask = center_crop_resize(mask, size);
    for (auto& c : sequence.camera) c = {c.x * scale, c.y * scale};
  }
  sequence.validate();
  return sequence;
}

std::vector<fs::path> list_sequences(const fs::path& dataset) {
  std::vector<fs::path> sequences;
  if (!fs::is_directory(dataset)) throw DataError("dataset directory " + dataset.string() + " does not exist");
  for (const auto& entry : fs::directory_iterator(dataset)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "frames")) sequences.push_back(entry.path());
  }
  std::sort(sequences.begin(), sequences.end());
  return sequences;
}

RgbImage center_crop_resize(const RgbImage& image, int size) {
  const Crop crop = centered_square(image.width, image.height);
  RgbImage out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double acc[3] = {0, 0, 0};
      bilinear_sample(source_coord(x, size, crop.side), source_coord(y, size, crop.side), crop.side,
                      [&](int sx, int sy, double weight) {
                        for (int c = 0; c < 3; ++c) acc[c] += weight * image.at(crop.x0 + sx, crop.y0 + sy, c);
                      });
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc[c]), 0L, 255L));
    }
  }
  return out;
}

BinaryMask center_crop_resize(const BinaryMask& mask, int size) {
  const Crop crop = centered_square(mask.width, mask.height);
  BinaryMask out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * crop.side / size), crop.side - 1);
      const int sy = std::min(static_cast<int>((y + 0.5) * crop.side / size), crop.side - 1);
      out.at(x, y) = mask.at(crop.x0 + sx, crop.y0 + sy);
    }
  }
  return out;
}

FlowField center_crop_resize(const FlowField& flow, int size) {
  const Crop crop = centered_square(flow.width, flow.height);
  const double scale = static_cast<double>(size) / crop.side;
  FlowField out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double u = 0;
      double v = 0;
      bilinear_sample(source_coord(x, size, crop.side), source_coord(y, size, crop.side), crop.side,
                      [&](int sx, int sy, double weight) {
                        u += weight * flow.u(crop.x0 + sx, crop.y0 + sy);
                        v += weight * flow.v(crop.x0 + sx, crop.y0 + sy);
                      });
      out.u(x, y) = static_cast<float>(u * scale);
      out.v(x, y) = static_cast<float>(v * scale);
    }
  }
  return out;
}

}  // namespace geomotion
