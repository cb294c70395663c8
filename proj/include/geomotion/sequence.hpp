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

#include "geomotion/dataio.hpp"

#include <string>
#include <vector>

namespace geomotion {

/// Ordered video frames plus whatever per-frame annotations are available.
///
/// `flows[t]` is the displacement from frame t to frame t+1; the final
/// frame carries a copy of the previous pair flow (see last_frame_flow).
/// `masks`, `camera` and `objects` are empty when unknown.
struct FrameSequence {
  std::string name;
  std::vector<RgbImage> frames;
  std::vector<FlowField> flows;
  std::vector<BinaryMask> masks;
  std::vector<Vec2> camera;
  std::vector<BinaryMask> objects;

  std::size_t size() const { return frames.size(); }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }

  /// Checks per-frame dimensions and annotation counts.
  void validate() const;
};

/// Extends N-1 pair flows to N per-frame flows by repeating the last one.
std::vector<FlowField> last_frame_flow(std::vector<FlowField> pair_flows);

/// Dataset layout of one sequence directory:
///   frames/000000.png   RGB
///   flows/000000.flo    N-1 pair flows
///   masks/000000.png    ground truth (optional)
///   objects/000000.png  object presence (optional)
///   meta.json           camera translations and generator metadata
void save_sequence(const FrameSequence& sequence, const fs::path& directory, const json& meta = json::object());

/// Loads a sequence directory. When `size` > 0 frames are center-cropped to
/// the largest square and resized to size x size (flows and masks follow).
FrameSequence load_sequence(const fs::path& directory, int size = 0);

/// Sorted sequence subdirectories of a dataset directory (those holding frames/).
std::vector<fs::path> list_sequences(const fs::path& dataset);

// Center-crop to the largest centered square, then resize to size x size.
RgbImage center_crop_resize(const RgbImage& image, int size);
BinaryMask center_crop_resize(const BinaryMask& mask, int size);
FlowField center_crop_resize(const FlowField& flow, int size);

}  // namespace geomotion
