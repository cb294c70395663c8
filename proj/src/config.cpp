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

#include "geomotion/config.hpp"

#include <cstdlib>
#include <iomanip>
#include <sstream>

namespace geomotion {

namespace {

const ConfigKey* find_key(const std::string& name) {
  for (const auto& key : config_schema()) {
    if (key.name == name) return &key;
  }
  return nullptr;
}

bool same_kind(const json& expected, const json& value) {
  if (expected.is_boolean()) return value.is_boolean();
  if (expected.is_number_integer()) return value.is_number_integer();
  if (expected.is_number()) return value.is_number();
  if (expected.is_string()) return value.is_string();
  return false;
}

const char* kind_name(const json& value) {
  if (value.is_boolean()) return "boolean";
  if (value.is_number_integer()) return "integer";
  if (value.is_number()) return "number";
  return "string";
}

json parse_value(const ConfigKey& key, const std::string& text) {
  const json& expected = key.toy;
  const auto bad = [&] {
    return ConfigError("key '" + key.name + "' expects a " + kind_name(expected) + ", got '" + text + "'");
  };
  if (expected.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw bad();
  }
  if (expected.is_number_integer()) {
    std::size_t used = 0;
    long long value = 0;
    try {
      value = std::stoll(text, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != text.size()) throw bad();
    return value;
  }
  if (expected.is_number()) {
    std::size_t used = 0;
    double value = 0;
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != text.size()) throw bad();
    return value;
  }
  return text;
}

ShapeFamily parse_shape(const std::string& name) {
  if (name == "rectangle") return ShapeFamily::Rectangle;
  if (name == "disk") return ShapeFamily::Disk;
  if (name == "mixed") return ShapeFamily::Mixed;
  throw ConfigError("shape must be rectangle, disk or mixed, got '" + name + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"profile", "toy", "paper", "default table: toy or paper"},
      // model
      {"image_size", 64, 518, "square input resolution after center crop and resize"},
      {"patch", 8, 14, "token patch size in pixels"},
      {"channels", 8, 1024, "C; geometry token sets carry 2C channels"},
      {"flow_width", 4, 128, "D_flow, flow token width"},
      {"cam_width", 8, 512, "D_cam, camera token width"},
      {"heads", 4, 16, "decoder attention heads"},
      {"layers", 5, 5, "decoder self-attention layers"},
      {"ffn_mult", 4, 4, "decoder feed-forward expansion"},
      {"frames_per_batch", 16, 16, "frames sampled per sequence per step"},
      {"positional", true, true, "add spatial and temporal position encodings"},
      {"use_cam", true, true, "feed camera tokens to the fusion module"},
      {"use_flow", true, true, "feed flow tokens to the fusion module"},
      {"use_shallow", true, true, "feed shallow geometry tokens to the fusion module"},
      // training
      {"learning_rate", 2e-3, 5e-5, "Adam learning rate"},
      {"epochs", 30, 15, "passes over the training sequences"},
      {"max_steps", 0, 0, "optimizer step cap; 0 for none"},
      {"seed", 0, 0, "seed for init, data order, frame phase and generation"},
      {"clip_norm", 1.0, 1.0, "global gradient-norm clip; 0 disables"},
      {"eval_every", 0, 0, "held-out evaluation period in steps; 0 evaluates at the end only"},
      {"target_jm", 0.0, 0.0, "held-out J_M target recorded as steps_to_target; 0 disables"},
      {"stop_at_target", false, false, "stop training once target_jm is reached"},
      {"deterministic", true, true, "serial evaluation; GEOMOTION_DETERMINISTIC=1 forces true"},
      {"init", "random", "random", "parameter init: random or checkpoint"},
      {"init_checkpoint", "", "", "checkpoint directory used when init=checkpoint"},
      {"focal_weight", 0.5, 0.5, "weight of the focal term"},
      {"dice_weight", 0.5, 0.5, "weight of the dice term"},
      {"focal_alpha", 0.25, 0.25, "focal class balance"},
      {"focal_gamma", 2.0, 2.0, "focal focusing exponent"},
      {"dice_smooth", 1.0, 1.0, "dice smoothing constant"},
      // data
      {"train_dir", "", "", "training dataset directory"},
      {"heldout_dir", "", "", "held-out dataset directory"},
      {"provider", "synthetic", "file", "geometry provider: synthetic or file"},
      {"provider_dir", "", "", "token directory of the file provider (defaults to the dataset)"},
      {"provider_noise", 0.25, 0.0, "synthetic provider noise std-dev"},
      {"provider_depth_weight", 1.0, 1.0, "synthetic provider presence-cue scale"},
      {"provider_seed", 0, 0, "synthetic provider noise seed"},
      // evaluation
      {"threshold", 0.5, 0.5, "probability binarization threshold (strict >)"},
      {"boundary_tolerance", -1, -1, "F tolerance in pixels; -1 for ceil(0.0075 * diagonal)"},
      {"repetitions", 5, 5, "bench repetitions (median reported)"},
      // scene generation
      {"sequences", 8, 8, "gen: number of sequences"},
      {"frames", 32, 32, "gen: frames per sequence"},
      {"objects", 2, 2, "gen: objects per sequence"},
      {"shape", "mixed", "mixed", "gen: rectangle, disk or mixed"},
      {"min_size", 10.0, 10.0, "gen: smallest object extent in pixels"},
      {"max_size", 20.0, 20.0, "gen: largest object extent in pixels"},
      {"velocity_range", 1.0, 1.0, "gen: max object speed per axis, pixels per frame"},
      {"velocity_step", 0.5, 0.5, "gen: speed quantum"},
      {"camera_range", 1.0, 1.0, "gen: max camera speed per axis"},
      {"static_probability", 0.25, 0.25, "gen: chance an object moves with the camera"},
      {"texture_cell", 4.0, 4.0, "gen: value-noise lattice spacing"},
      {"occlusion", true, true, "gen: allow objects to overlap"},
  };
  return schema;
}

Config Config::defaults(const std::string& profile) {
  if (profile != "toy" && profile != "paper") throw ConfigError("profile must be toy or paper, got '" + profile + "'");
  Config config;
  for (const auto& key : config_schema()) config.values_[key.name] = profile == "toy" ? key.toy : key.paper;
  return config;
}

void Config::merge(const json& values, const std::string& source) {
  if (!values.is_object()) throw ConfigError(source + ": configuration must be a JSON object");
  for (const auto& [name, value] : values.items()) {
    const ConfigKey* key = find_key(name);
    if (!key) throw ConfigError(source + ": unknown configuration key '" + name + "'");
    if (!same_kind(key->toy, value)) {
      throw ConfigError(source + ": key '" + name + "' expects a " + kind_name(key->toy));
    }
    values_[name] = value;
  }
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string name = assignment.substr(0, eq);
  const ConfigKey* key = find_key(name);
  if (!key) throw ConfigError("unknown configuration key '" + name + "'");
  values_[name] = parse_value(*key, assignment.substr(eq + 1));
}

const json& Config::at(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
  return values_.at(key);
}

Config load_config(const fs::path& file, const std::vector<std::string>& overrides) {
  json from_file = json::object();
  if (!file.empty()) {
    try {
      from_file = read_json(file);
    } catch (const DataError& e) {
      throw ConfigError(std::string("cannot read config file: ") + e.what());
    }
  }
  std::string profile = "toy";
  if (from_file.is_object() && from_file.contains("profile") && from_file["profile"].is_string()) {
    profile = from_file["profile"].get<std::string>();
  }
  for (const auto& o : overrides) {
    if (o.starts_with("profile=")) profile = o.substr(8);
  }
  Config config = Config::defaults(profile);
  config.merge(from_file, file.empty() ? "config" : file.string());
  for (const auto& o : overrides) config.set(o);
  const char* env = std::getenv("GEOMOTION_DETERMINISTIC");
  if (env && std::string(env) == "1") config.set("deterministic=true");
  return config;
}

std::string config_help() {
  std::ostringstream out;
  out << "Configuration keys (set with --config FILE or key=value; toy / paper defaults):\n";
  for (const auto& key : config_schema()) {
    out << "  " << std::left << std::setw(22) << key.name << ' ' << std::setw(12) << key.toy.dump() << ' '
        << std::setw(12) << key.paper.dump() << ' ' << key.help << '\n';
  }
  return out.str();
}

ModelConfig model_config(const Config& c) {
  ModelConfig m;
  m.image_size = c.get<int>("image_size");
  m.patch = c.get<int>("patch");
  m.channels = c.get<Index>("channels");
  m.flow_width = c.get<Index>("flow_width");
  m.cam_width = c.get<Index>("cam_width");
  m.heads = c.get<int>("heads");
  m.layers = c.get<int>("layers");
  m.ffn_mult = c.get<int>("ffn_mult");
  m.max_frames = c.get<int>("frames_per_batch");
  m.positional = c.get<bool>("positional");
  m.toggles = {c.get<bool>("use_cam"), c.get<bool>("use_flow"), c.get<bool>("use_shallow")};
  if (m.max_frames < 2) throw ConfigError("frames_per_batch must be at least 2");
  m.validate();
  return m;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.model = model_config(c);
  t.loss.focal_weight = c.get<double>("focal_weight");
  t.loss.dice_weight = c.get<double>("dice_weight");
  t.loss.alpha = c.get<double>("focal_alpha");
  t.loss.gamma = c.get<double>("focal_gamma");
  t.loss.dice_smooth = c.get<double>("dice_smooth");
  t.learning_rate = c.get<double>("learning_rate");
  t.epochs = c.get<int>("epochs");
  t.max_steps = c.get<int>("max_steps");
  t.seed = c.get<std::uint64_t>("seed");
  t.clip_norm = c.get<double>("clip_norm");
  t.eval_every = c.get<int>("eval_every");
  t.target_jm = c.get<double>("target_jm");
  t.stop_at_target = c.get<bool>("stop_at_target");
  t.threshold = c.get<double>("threshold");
  t.deterministic = c.get<bool>("deterministic");
  const auto init = c.get<std::string>("init");
  if (init == "checkpoint") {
    t.init_checkpoint = c.get<std::string>("init_checkpoint");
    if (t.init_checkpoint.empty()) throw ConfigError("init=checkpoint needs init_checkpoint");
  } else if (init != "random") {
    throw ConfigError("init must be random or checkpoint, got '" + init + "'");
  }
  t.validate();
  return t;
}

SceneConfig scene_config(const Config& c) {
  SceneConfig s;
  s.height = s.width = c.get<int>("image_size");
  s.frames = c.get<int>("frames");
  s.object_count = c.get<int>("objects");
  s.shape = parse_shape(c.get<std::string>("shape"));
  s.min_size = c.get<double>("min_size");
  s.max_size = c.get<double>("max_size");
  s.velocity_range = c.get<double>("velocity_range");
  s.velocity_step = c.get<double>("velocity_step");
  s.camera_range = c.get<double>("camera_range");
  s.static_object_probability = c.get<double>("static_probability");
  s.texture_cell = c.get<double>("texture_cell");
  s.allow_occlusion = c.get<bool>("occlusion");
  s.validate();
  return s;
}

ProviderSpec provider_spec(const Config& c) {
  ProviderSpec p;
  const auto kind = c.get<std::string>("provider");
  if (kind == "synthetic") {
    p.kind = ProviderKind::Synthetic;
  } else if (kind == "file") {
    p.kind = ProviderKind::File;
  } else {
    throw ConfigError("provider must be synthetic or file, got '" + kind + "'");
  }
  p.dataset_dir = c.get<std::string>("provider_dir");
  p.noise_amplitude = c.get<double>("provider_noise");
  p.depth_cue_weight = c.get<double>("provider_depth_weight");
  p.noise_seed = c.get<std::uint64_t>("provider_seed");
  return p;
}

}  // namespace geomotion
