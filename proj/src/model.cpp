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

#include "geomotion/model.hpp"

namespace geomotion {

void ModelConfig::validate() const {
  if (image_size <= 0) throw ConfigError("image_size must be positive");
  (void)grid();
  if (channels < 3) throw ConfigError("channels (C) must be at least 3");
  if (flow_width < 2 || flow_width % 2 != 0) throw ConfigError("flow_width must be an even number >= 2");
  if (cam_width < 1) throw ConfigError("cam_width must be positive");
  if (heads <= 0 || (2 * channels) % heads != 0) throw ConfigError("heads must divide the model width 2C");
  if (layers <= 0) throw ConfigError("layers must be positive");
  if (ffn_mult <= 0) throw ConfigError("ffn_mult must be positive");
  if (max_frames <= 0) throw ConfigError("max_frames must be positive");
}

json model_config_to_json(const ModelConfig& cfg) {
  return {{"image_size", cfg.image_size},
          {"patch", cfg.patch},
          {"channels", cfg.channels},
          {"flow_width", cfg.flow_width},
          {"cam_width", cfg.cam_width},
          {"heads", cfg.heads},
          {"layers", cfg.layers},
          {"ffn_mult", cfg.ffn_mult},
          {"max_frames", cfg.max_frames},
          {"positional", cfg.positional},
          {"toggles", {{"cam", cfg.toggles.cam}, {"flow", cfg.toggles.flow}, {"shallow", cfg.toggles.shallow}}}};
}

ModelConfig model_config_from_json(const json& doc) {
  ModelConfig cfg;
  try {
    cfg.image_size = doc.at("image_size").get<int>();
    cfg.patch = doc.at("patch").get<int>();
    cfg.channels = doc.at("channels").get<Index>();
    cfg.flow_width = doc.at("flow_width").get<Index>();
    cfg.cam_width = doc.at("cam_width").get<Index>();
    cfg.heads = doc.at("heads").get<int>();
    cfg.layers = doc.at("layers").get<int>();
    cfg.ffn_mult = doc.at("ffn_mult").get<int>();
    cfg.max_frames = doc.at("max_frames").get<int>();
    cfg.positional = doc.at("positional").get<bool>();
    const auto& toggles = doc.at("toggles");
    cfg.toggles = {toggles.at("cam").get<bool>(), toggles.at("flow").get<bool>(), toggles.at("shallow").get<bool>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

BinaryMask binarize(const Eigen::Ref<const Eigen::RowVectorXf>& probs, int width, int height, double threshold) {
  if (probs.size() != static_cast<Index>(width) * height) throw ShapeError("binarize: size mismatch");
  BinaryMask mask(width, height);
  for (Index i = 0; i < probs.size(); ++i) mask.values[static_cast<std::size_t>(i)] = probs[i] > threshold ? 1 : 0;
  return mask;
}

MatrixF default_refiner(const std::vector<RgbImage>& frames, const CoarseMasks& coarse) {
  if (frames.empty()) throw DataError("refinement needs frames");
  const int height = frames.front().height;
  const int width = frames.front().width;
  if (coarse.probs.cols() != static_cast<Index>(coarse.height) * coarse.width) {
    throw ShapeError("coarse masks do not match their declared size");
  }
  MatrixF up = coarse.probs;
  if (coarse.height != height || coarse.width != width) {
    up = bilinear_resize<float>(coarse.probs, coarse.height, coarse.width, height, width);
  }
  return (up.array() > 0.5f).cast<float>().matrix();
}

MatrixF refine(const std::vector<RgbImage>& frames, const CoarseMasks& coarse, const RefinementHook& hook) {
  MatrixF refined = hook ? hook(frames, coarse) : default_refiner(frames, coarse);
  const Index expected = frames.empty() ? 0 : static_cast<Index>(frames.front().width) * frames.front().height;
  if (refined.rows() != coarse.probs.rows() || refined.cols() != expected) {
    throw ShapeError("refinement hook returned masks of shape [" + std::to_string(refined.rows()) + ", " +
                     std::to_string(refined.cols()) + "], expected [" + std::to_string(coarse.probs.rows()) + ", " +
                     std::to_string(expected) + "]");
  }
  return refined;
}

}  // namespace geomotion
