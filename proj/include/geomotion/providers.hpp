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

// Frozen geometry-feature providers.
//
// A provider turns a frame sequence into three per-patch token sets:
//   geo_low  [N, hw, 2C]   shallow backbone layers (5 and 15, concatenated)
//   geo_high [N, hw, 2C]   deep backbone layers (35 and 36, concatenated)
//   cam      [N, hw, Dcam] camera-decoder tokens
// Tokens are stored as [N*hw, channels] with frame-major rows.

#pragma once

#include "geomotion/sequence.hpp"

#include <cstdint>
#include <string>

namespace geomotion {

/// Patch grid of a square-patch tokenizer.
struct TokenGrid {
  int rows = 0;
  int cols = 0;
  int patch = 0;

  int tokens() const { return rows * cols; }
  int image_height() const { return rows * patch; }
  int image_width() const { return cols * patch; }

  /// Throws ConfigError unless patch divides both image extents.
  static TokenGrid for_image(int height, int width, int patch);
};

struct GeometryBundle {
  Index frames = 0;
  TokenGrid grid;
  Index channels = 0;  // C; geo_low/geo_high carry 2C
  MatrixF geo_low;
  MatrixF geo_high;
  MatrixF cam;

  Index cam_width() const { return cam.cols(); }
  /// Rows of one frame as a [hw, channels] block.
  auto frame_rows(const MatrixF& tokens, Index frame) const { return tokens.middleRows(frame * grid.tokens(), grid.tokens()); }
  /// Same bundle restricted to the given frames, in order.
  GeometryBundle select(const std::vector<std::size_t>& frame_indices) const;
  void validate() const;
};

enum class ProviderKind { Synthetic, File };

struct ProviderSpec {
  ProviderKind kind = ProviderKind::Synthetic;
  fs::path dataset_dir;            // file kind: <dataset>/<sequence>/{geo_low,geo_high,cam}.gmt1
  double noise_amplitude = 0.25;   // synthetic kind: std-dev of additive Gaussian noise
  double depth_cue_weight = 1.0;   // synthetic kind: scale of the object-presence channels
  std::uint64_t noise_seed = 0;
};

GeometryBundle provide(const FrameSequence& sequence, const ProviderSpec& spec, const TokenGrid& grid, Index channels,
                       Index cam_width);

/// Synthetic backbone surrogate built from ground-truth scene state.
///
/// geo_low:  mean RGB (3), object-presence fraction (1), presence on an s x s
///           sub-grid of the patch (s*s), RGB std-dev, zeros.
/// geo_high: motion-coherence fraction (1, fraction of patch pixels moving
///           with the camera), coherence per patch quadrant (4), zeros.
/// cam:      camera translation (x, y) repeated across channels.
/// Every channel then receives N(0, noise_amplitude^2) noise.
GeometryBundle synthetic_tokens(const FrameSequence& sequence, const ProviderSpec& spec, const TokenGrid& grid,
                                Index channels, Index cam_width);

/// Side of the presence sub-grid used by synthetic_tokens for 2C channels.
int presence_subgrid(Index channels, int patch);

inline constexpr Index kCoherenceChannel = 0;

/// Writes geo_low.gmt1, geo_high.gmt1 and cam.gmt1 into `directory`.
void write_bundle(const GeometryBundle& bundle, const fs::path& directory);
GeometryBundle read_bundle(const fs::path& directory, Index frames, const TokenGrid& grid, Index channels,
                           Index cam_width);

json provider_spec_to_json(const ProviderSpec& spec);

}  // namespace geomotion
