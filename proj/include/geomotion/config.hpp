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

// Flat key/value run configuration shared by every CLI subcommand.
//
// Precedence: profile defaults < config file < key=value overrides.
// The "profile" key selects the default table ("toy" or "paper").

#pragma once

#include "geomotion/synthscenes.hpp"
#include "geomotion/trainer.hpp"

#include <string>
#include <vector>

namespace geomotion {

struct ConfigKey {
  std::string name;
  json toy;    // default under the toy profile
  json paper;  // default under the paper profile
  std::string help;
};

const std::vector<ConfigKey>& config_schema();

class Config {
 public:
  /// Defaults of the named profile; throws ConfigError for unknown profiles.
  static Config defaults(const std::string& profile = "toy");

  /// Merges a JSON object; unknown keys and type mismatches throw ConfigError.
  void merge(const json& values, const std::string& source);
  /// Applies one "key=value" override, parsing the value by the key's type.
  void set(const std::string& assignment);

  const json& values() const { return values_; }
  const json& at(const std::string& key) const;

  template <typename T>
  T get(const std::string& key) const {
    return at(key).get<T>();
  }

 private:
  json values_ = json::object();
};

/// Builds a configuration from an optional JSON file plus overrides. A
/// "profile" entry in the file or overrides picks the default table first.
/// GEOMOTION_DETERMINISTIC=1 in the environment forces deterministic=true.
Config load_config(const fs::path& file, const std::vector<std::string>& overrides);

/// Help text listing every key with its toy and paper defaults.
std::string config_help();

ModelConfig model_config(const Config& config);
TrainConfig train_config(const Config& config);
SceneConfig scene_config(const Config& config);
ProviderSpec provider_spec(const Config& config);

}  // namespace geomotion
