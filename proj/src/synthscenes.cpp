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

#include "geomotion/synthscenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace geomotion {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ (splitmix(b) + 0x632BE59BD9B4E019ull)); }

// Portable draws; std distributions are implementation-defined.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double quantized(std::mt19937_64& rng, double range, double step) {
  const auto levels = static_cast<std::int64_t>(std::floor(range / step + 1e-9));
  const auto k = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(2 * levels + 1)) - levels;
  return static_cast<double>(k) * step;
}

bool same_motion(const Vec2& a, const Vec2& b) { return std::abs(a.x - b.x) <= 1e-6 && std::abs(a.y - b.y) <= 1e-6; }

class ValueNoise {
 public:
  ValueNoise(std::uint64_t seed, std::uint64_t surface, double cell, bool flat)
      : key_(hash_combine(seed, surface)), cell_(cell), flat_(flat) {}

  std::uint8_t sample(double x, double y, int channel) const {
    if (flat_) return static_cast<std::uint8_t>(lattice(0, 0, channel) * 255.0 + 0.5);
    const double u = x / cell_;
    const double v = y / cell_;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const auto i = static_cast<std::int64_t>(fu);
    const auto j = static_cast<std::int64_t>(fv);
    const double a = u - fu;
    const double b = v - fv;
    const double value = (1 - a) * (1 - b) * lattice(i, j, channel) + a * (1 - b) * lattice(i + 1, j, channel) +
                         (1 - a) * b * lattice(i, j + 1, channel) + a * b * lattice(i + 1, j + 1, channel);
    return static_cast<std::uint8_t>(std::clamp(std::floor(value * 255.0 + 0.5), 0.0, 255.0));
  }

 private:
  double lattice(std::int64_t i, std::int64_t j, int channel) const {
    std::uint64_t h = hash_combine(key_, static_cast<std::uint64_t>(i));
    h = hash_combine(h, static_cast<std::uint64_t>(j));
    h = hash_combine(h, static_cast<std::uint64_t>(channel));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t key_;
  double cell_;
  bool flat_;
};

Vec2 position_at(const SceneObject& object, int t) {
  return {object.position.x + object.velocity.x * t, object.position.y + object.velocity.y * t};
}

bool covers(const SceneObject& object, int t, int x, int y) {
  const Vec2 p = position_at(object, t);
  const double cx = x + 0.5;
  const double cy = y + 0.5;
  if (object.shape == ShapeFamily::Disk) {
    const double dx = cx - p.x;
    const double dy = cy - p.y;
    return dx * dx + dy * dy <= object.size.x * object.size.x;
  }
  return cx >= p.x && cx < p.x + object.size.x && cy >= p.y && cy < p.y + object.size.y;
}

struct Box {
  double x0, y0, x1, y1;
};

Box bounds_at(const SceneObject& object, int t) {
  const Vec2 p = position_at(object, t);
  if (object.shape == ShapeFamily::Disk) return {p.x - object.size.x, p.y - object.size.x, p.x + object.size.x, p.y + object.size.x};
  return {p.x, p.y, p.x + object.size.x, p.y + object.size.y};
}

bool overlaps(const SceneObject& a, const SceneObject& b, int frames) {
  for (int t = 0; t < frames; ++t) {
    const Box p = bounds_at(a, t);
    const Box q = bounds_at(b, t);
    if (p.x0 < q.x1 && q.x0 < p.x1 && p.y0 < q.y1 && q.y0 < p.y1) return true;
  }
  return false;
}

// Start coordinate keeping [start, start + extent) inside [0, limit) for the
// whole sequence when possible; otherwise anywhere that starts inside.
double draw_start(std::mt19937_64& rng, double extent, double limit, double velocity, int frames) {
  const double travel = velocity * (frames - 1);
  double lo = std::max(0.0, -travel);
  double hi = std::min(limit - extent, limit - extent - travel);
  if (lo > hi) {
    lo = 0.0;
    hi = limit - extent;
  }
  return std::floor(uniform(rng, lo, hi) + 0.5);
}

SceneObject draw_object(const SceneConfig& config, const Vec2& camera, std::mt19937_64& rng, bool force_moving) {
  SceneObject object;
  object.shape = config.shape;
  if (object.shape == ShapeFamily::Mixed) object.shape = (rng() & 1) ? ShapeFamily::Disk : ShapeFamily::Rectangle;

  if (!force_moving && uniform01(rng) < config.static_object_probability) {
    object.velocity = camera;
  } else {
    do {
      object.velocity = {quantized(rng, config.velocity_range, config.velocity_step),
                         quantized(rng, config.velocity_range, config.velocity_step)};
    } while (same_motion(object.velocity, camera));
  }

  if (object.shape == ShapeFamily::Disk) {
    const double radius = std::floor(uniform(rng, config.min_size, config.max_size) / 2.0 + 0.5);
    object.size = {radius, radius};
    object.position = {draw_start(rng, 2 * radius, config.width, object.velocity.x, config.frames) + radius,
                       draw_start(rng, 2 * radius, config.height, object.velocity.y, config.frames) + radius};
  } else {
    object.size = {std::floor(uniform(rng, config.min_size, config.max_size) + 0.5),
                   std::floor(uniform(rng, config.min_size, config.max_size) + 0.5)};
    object.position = {draw_start(rng, object.size.x, config.width, object.velocity.x, config.frames),
                       draw_start(rng, object.size.y, config.height, object.velocity.y, config.frames)};
  }
  return object;
}

const char* shape_name(ShapeFamily shape) {
  switch (shape) {
    case ShapeFamily::Rectangle: return "rectangle";
    case ShapeFamily::Disk: return "disk";
    case ShapeFamily::Mixed: return "mixed";
  }
  return "mixed";
}

ShapeFamily parse_shape(const std::string& name) {
  if (name == "rectangle") return ShapeFamily::Rectangle;
  if (name == "disk") return ShapeFamily::Disk;
  if (name == "mixed") return ShapeFamily::Mixed;
  throw ConfigError("unknown shape family '" + name + "'");
}

}  // namespace

void SceneConfig::validate() const {
  if (frames < 2) throw ConfigError("scene needs at least 2 frames");
  if (width <= 0 || height <= 0) throw ConfigError("scene image size must be positive");
  if (object_count < 0) throw ConfigError("object count must be non-negative");
  if (objects.empty()) {
    if (!(min_size > 0) || max_size < min_size) throw ConfigError("object size range is invalid");
    if (max_size > std::min(width, height)) throw ConfigError("object larger than frame");
    if (!(velocity_step > 0) || velocity_range < 0) throw ConfigError("velocity range/step is invalid");
  }
  for (const auto& object : objects) {
    const double w = object.shape == ShapeFamily::Disk ? 2 * object.size.x : object.size.x;
    const double h = object.shape == ShapeFamily::Disk ? 2 * object.size.x : object.size.y;
    if (!(w > 0) || !(h > 0)) throw ConfigError("object size must be positive");
    if (w > width || h > height) throw ConfigError("object larger than frame");
    if (object.shape == ShapeFamily::Mixed) throw ConfigError("explicit objects need a concrete shape");
  }
  if (!(texture_cell > 0)) throw ConfigError("texture cell must be positive");
}

SyntheticSequence generate_sequence(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(hash_combine(seed, 0x5CE7E5ull));

  SyntheticSequence out;
  out.camera = config.camera_translation;
  if (config.camera_range > 0) {
    out.camera = {quantized(rng, config.camera_range, config.velocity_step),
                  quantized(rng, config.camera_range, config.velocity_step)};
  }

  if (!config.objects.empty()) {
    out.objects = config.objects;
  } else {
    for (int k = 0; k < config.object_count; ++k) {
      SceneObject object;
      int attempt = 0;
      for (;; ++attempt) {
        object = draw_object(config, out.camera, rng, false);
        const bool clear = std::none_of(out.objects.begin(), out.objects.end(),
                                        [&](const SceneObject& o) { return overlaps(o, object, config.frames); });
        if (config.allow_occlusion || clear) break;
        if (attempt >= 200) throw ConfigError("cannot place non-overlapping objects; reduce count or size");
      }
      out.objects.push_back(object);
    }
    const bool any_moving = std::any_of(out.objects.begin(), out.objects.end(),
                                        [&](const SceneObject& o) { return !same_motion(o.velocity, out.camera); });
    if (!any_moving && !out.objects.empty()) {
      const Vec2 keep = out.objects.front().position;
      out.objects.front() = draw_object(config, out.camera, rng, true);
      if (!config.allow_occlusion) out.objects.front().position = keep;
    }
  }

  const int w = config.width;
  const int h = config.height;
  const std::uint64_t texture_key = hash_combine(config.texture_seed, seed);
  std::vector<ValueNoise> textures;
  textures.emplace_back(texture_key, 0, config.texture_cell, config.flat_textures);
  for (std::size_t k = 0; k < out.objects.size(); ++k) {
    textures.emplace_back(texture_key, k + 1, config.texture_cell, config.flat_textures);
  }

  FrameSequence& seq = out.sequence;
  for (int t = 0; t < config.frames; ++t) {
    std::vector<std::int16_t> labels(static_cast<std::size_t>(w) * h, -1);
    RgbImage frame(w, h);
    FlowField flow(w, h);
    BinaryMask mask(w, h);
    BinaryMask presence(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::int16_t label = -1;
        for (std::size_t k = 0; k < out.objects.size(); ++k) {
          if (covers(out.objects[k], t, x, y)) label = static_cast<std::int16_t>(k);
        }
        labels[static_cast<std::size_t>(y) * w + x] = label;
        Vec2 motion = out.camera;
        double sx = x - out.camera.x * t;
        double sy = y - out.camera.y * t;
        if (label >= 0) {
          const SceneObject& object = out.objects[static_cast<std::size_t>(label)];
          const Vec2 p = position_at(object, t);
          motion = object.velocity;
          sx = x - p.x;
          sy = y - p.y;
          presence.at(x, y) = 1;
          mask.at(x, y) = same_motion(motion, out.camera) ? 0 : 1;
        }
        const ValueNoise& texture = textures[static_cast<std::size_t>(label + 1)];
        for (int c = 0; c < 3; ++c) frame.at(x, y, c) = texture.sample(sx, sy, c);
        flow.u(x, y) = static_cast<float>(motion.x);
        flow.v(x, y) = static_cast<float>(motion.y);
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.flows.push_back(std::move(flow));
    seq.masks.push_back(std::move(mask));
    seq.objects.push_back(std::move(presence));
    seq.camera.push_back(out.camera);
    out.labels.push_back(std::move(labels));
  }
  return out;
}

double warp_consistency(const SyntheticSequence& synthetic) {
  const FrameSequence& seq = synthetic.sequence;
  const int w = seq.width();
  const int h = seq.height();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const auto& frame = seq.frames[t];
    const auto& next = seq.frames[t + 1];
    const auto& labels = synthetic.labels[t];
    const auto& next_labels = synthetic.labels[t + 1];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double qx = x + seq.flows[t].u(x, y);
        const double qy = y + seq.flows[t].v(x, y);
        if (qx < 0 || qy < 0 || qx > w - 1 || qy > h - 1) continue;
        const int x0 = static_cast<int>(std::floor(qx));
        const int y0 = static_cast<int>(std::floor(qy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const std::int16_t label = labels[static_cast<std::size_t>(y) * w + x];
        auto visible = [&](int px, int py) { return next_labels[static_cast<std::size_t>(py) * w + px] == label; };
        if (!visible(x0, y0) || !visible(x1, y0) || !visible(x0, y1) || !visible(x1, y1)) continue;
        const double fx = qx - x0;
        const double fy = qy - y0;
        for (int c = 0; c < 3; ++c) {
          const double warped = (1 - fx) * (1 - fy) * next.at(x0, y0, c) + fx * (1 - fy) * next.at(x1, y0, c) +
                                (1 - fx) * fy * next.at(x0, y1, c) + fx * fy * next.at(x1, y1, c);
          total += std::abs(warped - frame.at(x, y, c)) / 255.0;
          ++count;
        }
      }
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::vector<SyntheticSequence> generate_suite(const SceneConfig& config, std::size_t count, std::uint64_t seed) {
  std::vector<SyntheticSequence> suite;
  suite.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticSequence s = generate_sequence(config, hash_combine(seed, i));
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03zu", i);
    s.sequence.name = name;
    suite.push_back(std::move(s));
  }
  return suite;
}

json scene_config_to_json(const SceneConfig& c) {
  json objects = json::array();
  for (const auto& o : c.objects) {
    objects.push_back({{"shape", shape_name(o.shape)},
                       {"position", {o.position.x, o.position.y}},
                       {"size", {o.size.x, o.size.y}},
                       {"velocity", {o.velocity.x, o.velocity.y}}});
  }
  return {{"height", c.height},
          {"width", c.width},
          {"frames", c.frames},
          {"object_count", c.object_count},
          {"shape", shape_name(c.shape)},
          {"min_size", c.min_size},
          {"max_size", c.max_size},
          {"velocity_range", c.velocity_range},
          {"velocity_step", c.velocity_step},
          {"camera_translation", {c.camera_translation.x, c.camera_translation.y}},
          {"camera_range", c.camera_range},
          {"static_object_probability", c.static_object_probability},
          {"texture_seed", c.texture_seed},
          {"texture_cell", c.texture_cell},
          {"flat_textures", c.flat_textures},
          {"allow_occlusion", c.allow_occlusion},
          {"objects", objects}};
}

SceneConfig scene_config_from_json(const json& doc) {
  SceneConfig c;
  auto vec2 = [](const json& v) { return Vec2{v.at(0).get<double>(), v.at(1).get<double>()}; };
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "height") c.height = value.get<int>();
      else if (key == "width") c.width = value.get<int>();
      else if (key == "frames") c.frames = value.get<int>();
      else if (key == "object_count") c.object_count = value.get<int>();
      else if (key == "shape") c.shape = parse_shape(value.get<std::string>());
      else if (key == "min_size") c.min_size = value.get<double>();
      else if (key == "max_size") c.max_size = value.get<double>();
      else if (key == "velocity_range") c.velocity_range = value.get<double>();
      else if (key == "velocity_step") c.velocity_step = value.get<double>();
      else if (key == "camera_translation") c.camera_translation = vec2(value);
      else if (key == "camera_range") c.camera_range = value.get<double>();
      else if (key == "static_object_probability") c.static_object_probability = value.get<double>();
      else if (key == "texture_seed") c.texture_seed = value.get<std::uint64_t>();
      else if (key == "texture_cell") c.texture_cell = value.get<double>();
      else if (key == "flat_textures") c.flat_textures = value.get<bool>();
      else if (key == "allow_occlusion") c.allow_occlusion = value.get<bool>();
      else if (key == "objects") {
        for (const auto& o : value) {
          SceneObject object;
          object.shape = parse_shape(o.at("shape").get<std::string>());
          object.position = vec2(o.at("position"));
          object.size = vec2(o.at("size"));
          object.velocity = vec2(o.at("velocity"));
          c.objects.push_back(object);
        }
      } else {
        throw ConfigError("unknown scene config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scene config: ") + e.what());
  }
  return c;
}

}  // namespace geomotion
