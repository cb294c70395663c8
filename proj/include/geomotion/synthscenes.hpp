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

// Deterministic synthetic dynamic scenes: rigid shapes translating over a
// background that moves with a simulated camera. Ground-truth flow, motion
// masks and camera translations are exact by construction.

#pragma once

#include "geomotion/sequence.hpp"

#include <cstdint>
#include <vector>

namespace geomotion {

enum class ShapeFamily { Rectangle, Disk, Mixed };

/// One rigid object. For rectangles `position` is the top-left corner and
/// `size` the extent; for disks `position` is the center and size.x the radius.
struct SceneObject {
  ShapeFamily shape = ShapeFamily::Rectangle;
  Vec2 position;
  Vec2 size;
  Vec2 velocity;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int frames = 24;
  int object_count = 2;
  ShapeFamily shape = ShapeFamily::Mixed;
  double min_size = 10.0;
  double max_size = 20.0;
  /// Object velocity components are drawn from [-velocity_range, velocity_range]
  /// in multiples of velocity_step.
  double velocity_range = 1.5;
  double velocity_step = 0.5;
  Vec2 camera_translation;
  /// When > 0 the camera translation is drawn per seed from this range
  /// (multiples of velocity_step) instead of using camera_translation.
  double camera_range = 0.0;
  /// Chance that a random object moves exactly with the camera.
  double static_object_probability = 0.25;
  std::uint64_t texture_seed = 0;
  /// Lattice spacing of the value-noise textures, in pixels.
  double texture_cell = 4.0;
  bool flat_textures = false;
  bool allow_occlusion = true;
  /// Explicit objects; when non-empty, replaces random placement.
  std::vector<SceneObject> objects;

  /// Throws ConfigError.
  void validate() const;
};

struct SyntheticSequence {
  FrameSequence sequence;  // frames, flows (N, exact), masks, camera, objects
  std::vector<std::vector<std::int16_t>> labels;  // per frame: -1 background, else object index
  std::vector<SceneObject> objects;
  Vec2 camera;
};

SyntheticSequence generate_sequence(const SceneConfig& config, std::uint64_t seed);

/// Mean absolute color error, as a fraction of the 8-bit range, between
/// frame t and frame t+1 sampled bilinearly at p + flows[t](p), over pixels
/// whose surface stays visible and in bounds.
double warp_consistency(const SyntheticSequence& sequence);

/// `count` sequences named seq_000.. with seeds derived from `seed`.
std::vector<SyntheticSequence> generate_suite(const SceneConfig& config, std::size_t count, std::uint64_t seed);

json scene_config_to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const json& doc);

}  // namespace geomotion
