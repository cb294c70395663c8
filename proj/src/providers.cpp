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

#include "geomotion/providers.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace geomotion {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Box-Muller on raw engine output so noise is identical across standard libraries.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void add_noise(MatrixF& tokens, double amplitude, std::uint64_t seed) {
  if (amplitude == 0.0) return;
  Gaussian gaussian(seed);
  for (Index i = 0; i < tokens.size(); ++i) tokens.data()[i] += static_cast<float>(amplitude * gaussian());
}

// Mean of `value(x, y)` over the pixel rectangle [x0, x1) x [y0, y1).
double region_mean(int x0, int x1, int y0, int y1, const std::function<double(int, int)>& value) {
  double sum = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) sum += value(x, y);
  }
  const int count = (x1 - x0) * (y1 - y0);
  return count > 0 ? sum / count : 0.0;
}

void check_shape(const TensorFile& tensor, const std::string& name, std::uint64_t frames, std::uint64_t tokens,
                 std::uint64_t channels) {
  const std::vector<std::uint64_t> expected{frames, tokens, channels};
  if (tensor.shape != expected) {
    std::string got;
    for (auto e : tensor.shape) got += (got.empty() ? "" : ",") + std::to_string(e);
    throw ShapeError(name + " has shape [" + got + "], expected [" + std::to_string(frames) + "," +
                     std::to_string(tokens) + "," + std::to_string(channels) + "]");
  }
  for (float v : tensor.data) {
    if (!std::isfinite(v)) throw DataError(name + " contains non-finite values");
  }
}

MatrixF to_matrix(const TensorFile& tensor) {
  const auto rows = static_cast<Index>(tensor.shape[0] * tensor.shape[1]);
  const auto cols = static_cast<Index>(tensor.shape[2]);
  return ConstMatrixMap<float>(tensor.data.data(), rows, cols);
}

TensorFile to_tensor(const MatrixF& tokens, Index frames) {
  TensorFile tensor;
  tensor.shape = {static_cast<std::uint64_t>(frames), static_cast<std::uint64_t>(tokens.rows() / std::max<Index>(frames, 1)),
                  static_cast<std::uint64_t>(tokens.cols())};
  tensor.data.assign(tokens.data(), tokens.data() + tokens.size());
  return tensor;
}

}  // namespace

TokenGrid TokenGrid::for_image(int height, int width, int patch) {
  if (patch <= 0) throw ConfigError("patch size must be positive");
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide image " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  return {height / patch, width / patch, patch};
}

GeometryBundle GeometryBundle::select(const std::vector<std::size_t>& frame_indices) const {
  GeometryBundle out;
  out.frames = static_cast<Index>(frame_indices.size());
  out.grid = grid;
  out.channels = channels;
  const Index hw = grid.tokens();
  out.geo_low.resize(out.frames * hw, geo_low.cols());
  out.geo_high.resize(out.frames * hw, geo_high.cols());
  out.cam.resize(out.frames * hw, cam.cols());
  for (Index i = 0; i < out.frames; ++i) {
    const auto src = static_cast<Index>(frame_indices[static_cast<std::size_t>(i)]);
    if (src >= frames) throw ShapeError("bundle frame index out of range");
    out.geo_low.middleRows(i * hw, hw) = geo_low.middleRows(src * hw, hw);
    out.geo_high.middleRows(i * hw, hw) = geo_high.middleRows(src * hw, hw);
    out.cam.middleRows(i * hw, hw) = cam.middleRows(src * hw, hw);
  }
  return out;
}

void GeometryBundle::validate() const {
  const Index rows = frames * grid.tokens();
  if (geo_low.rows() != rows || geo_low.cols() != 2 * channels) throw ShapeError("geo_low does not match [N, hw, 2C]");
  if (geo_high.rows() != rows || geo_high.cols() != 2 * channels) throw ShapeError("geo_high does not match [N, hw, 2C]");
  if (cam.rows() != rows) throw ShapeError("cam does not match [N, hw, Dcam]");
  if (!geo_low.allFinite() || !geo_high.allFinite() || !cam.allFinite()) throw DataError("bundle holds non-finite tokens");
}

int presence_subgrid(Index channels, int patch) {
  const Index available = 2 * channels - 4;
  int side = 0;
  while (static_cast<Index>(side + 1) * (side + 1) <= available && side + 1 <= patch) ++side;
  return side;
}

GeometryBundle synthetic_tokens(const FrameSequence& sequence, const ProviderSpec& spec, const TokenGrid& grid,
                                Index channels, Index cam_width) {
  if (sequence.masks.size() != sequence.size() || sequence.camera.size() != sequence.size()) {
    throw DataError("synthetic provider needs ground-truth masks and camera translations");
  }
  if (sequence.height() != grid.image_height() || sequence.width() != grid.image_width()) {
    throw ShapeError("sequence size does not match the token grid");
  }
  if (channels < 3) throw ConfigError("synthetic provider needs C >= 3");
  const Index frames = static_cast<Index>(sequence.size());
  const Index hw = grid.tokens();
  const int patch = grid.patch;
  const int side = presence_subgrid(channels, patch);
  const bool have_objects = sequence.objects.size() == sequence.size();
  const double depth = spec.depth_cue_weight;

  GeometryBundle bundle;
  bundle.frames = frames;
  bundle.grid = grid;
  bundle.channels = channels;
  bundle.geo_low = MatrixF::Zero(frames * hw, 2 * channels);
  bundle.geo_high = MatrixF::Zero(frames * hw, 2 * channels);
  bundle.cam = MatrixF::Zero(frames * hw, cam_width);

  for (Index t = 0; t < frames; ++t) {
    const auto& frame = sequence.frames[static_cast<std::size_t>(t)];
    const auto& mask = sequence.masks[static_cast<std::size_t>(t)];
    const BinaryMask* objects = have_objects ? &sequence.objects[static_cast<std::size_t>(t)] : &mask;
    const Vec2 camera = sequence.camera[static_cast<std::size_t>(t)];
    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c) {
        const Index row = t * hw + r * grid.cols + c;
        const int x0 = c * patch;
        const int y0 = r * patch;
        auto low = bundle.geo_low.row(row);
        auto high = bundle.geo_high.row(row);

        double mean[3];
        double stddev[3];
        for (int ch = 0; ch < 3; ++ch) {
          mean[ch] = region_mean(x0, x0 + patch, y0, y0 + patch, [&](int x, int y) { return frame.at(x, y, ch) / 255.0; });
          const double sq = region_mean(x0, x0 + patch, y0, y0 + patch, [&](int x, int y) {
            const double d = frame.at(x, y, ch) / 255.0 - mean[ch];
            return d * d;
          });
          stddev[ch] = std::sqrt(sq);
          low[ch] = static_cast<float>(mean[ch]);
        }
        low[3] = static_cast<float>(depth * region_mean(x0, x0 + patch, y0, y0 + patch,
                                                        [&](int x, int y) { return double(objects->at(x, y)); }));
        for (int i = 0; i < side; ++i) {
          for (int j = 0; j < side; ++j) {
            const int sy0 = y0 + i * patch / side;
            const int sy1 = y0 + (i + 1) * patch / side;
            const int sx0 = x0 + j * patch / side;
            const int sx1 = x0 + (j + 1) * patch / side;
            low[4 + i * side + j] = static_cast<float>(
                depth * region_mean(sx0, sx1, sy0, sy1, [&](int x, int y) { return double(objects->at(x, y)); }));
          }
        }
        for (Index ch = 4 + side * side, k = 0; ch < 2 * channels && k < 3; ++ch, ++k) {
          low[ch] = static_cast<float>(stddev[k]);
        }

        high[kCoherenceChannel] = static_cast<float>(
            1.0 - region_mean(x0, x0 + patch, y0, y0 + patch, [&](int x, int y) { return double(mask.at(x, y)); }));
        const int half = patch / 2;
        for (int q = 0; q < 4 && 1 + q < 2 * channels; ++q) {
          const int qx0 = x0 + (q % 2) * half;
          const int qy0 = y0 + (q / 2) * half;
          const int qx1 = (q % 2) ? x0 + patch : x0 + half;
          const int qy1 = (q / 2) ? y0 + patch : y0 + half;
          high[1 + q] = static_cast<float>(
              1.0 - region_mean(qx0, qx1, qy0, qy1, [&](int x, int y) { return double(mask.at(x, y)); }));
        }

        for (Index ch = 0; ch < cam_width; ++ch) bundle.cam(row, ch) = static_cast<float>(ch % 2 == 0 ? camera.x : camera.y);
      }
    }
  }

  const std::uint64_t base = mix(spec.noise_seed ^ mix(fnv1a(sequence.name)));
  add_noise(bundle.geo_low, spec.noise_amplitude, mix(base + 1));
  add_noise(bundle.geo_high, spec.noise_amplitude, mix(base + 2));
  add_noise(bundle.cam, spec.noise_amplitude, mix(base + 3));
  return bundle;
}

void write_bundle(const GeometryBundle& bundle, const fs::path& directory) {
  bundle.validate();
  fs::create_directories(directory);
  write_tensor(to_tensor(bundle.geo_low, bundle.frames), directory / "geo_low.gmt1");
  write_tensor(to_tensor(bundle.geo_high, bundle.frames), directory / "geo_high.gmt1");
  write_tensor(to_tensor(bundle.cam, bundle.frames), directory / "cam.gmt1");
}

GeometryBundle read_bundle(const fs::path& directory, Index frames, const TokenGrid& grid, Index channels,
                           Index cam_width) {
  const auto n = static_cast<std::uint64_t>(frames);
  const auto hw = static_cast<std::uint64_t>(grid.tokens());
  const TensorFile low = read_tensor(directory / "geo_low.gmt1");
  check_shape(low, "geo_low", n, hw, static_cast<std::uint64_t>(2 * channels));
  const TensorFile high = read_tensor(directory / "geo_high.gmt1");
  check_shape(high, "geo_high", n, hw, static_cast<std::uint64_t>(2 * channels));
  const TensorFile cam = read_tensor(directory / "cam.gmt1");
  check_shape(cam, "cam", n, hw, static_cast<std::uint64_t>(cam_width));
  GeometryBundle bundle;
  bundle.frames = frames;
  bundle.grid = grid;
  bundle.channels = channels;
  bundle.geo_low = to_matrix(low);
  bundle.geo_high = to_matrix(high);
  bundle.cam = to_matrix(cam);
  return bundle;
}

GeometryBundle provide(const FrameSequence& sequence, const ProviderSpec& spec, const TokenGrid& grid, Index channels,
                       Index cam_width) {
  if (sequence.height() != grid.image_height() || sequence.width() != grid.image_width()) {
    throw ConfigError("token grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " at patch " +
                      std::to_string(grid.patch) + " does not tile the " + std::to_string(sequence.height()) + "x" +
                      std::to_string(sequence.width()) + " frames");
  }
  GeometryBundle bundle;
  if (spec.kind == ProviderKind::Synthetic) {
    bundle = synthetic_tokens(sequence, spec, grid, channels, cam_width);
  } else {
    if (spec.dataset_dir.empty()) throw ConfigError("file provider needs a dataset directory");
    bundle = read_bundle(spec.dataset_dir / sequence.name, static_cast<Index>(sequence.size()), grid, channels, cam_width);
  }
  bundle.validate();
  return bundle;
}

json provider_spec_to_json(const ProviderSpec& spec) {
  return {{"kind", spec.kind == ProviderKind::Synthetic ? "synthetic" : "file"},
          {"dataset_dir", spec.dataset_dir.string()},
          {"noise_amplitude", spec.noise_amplitude},
          {"depth_cue_weight", spec.depth_cue_weight},
          {"noise_seed", spec.noise_seed}};
}

}  // namespace geomotion
