#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "capsroute/model.hpp"
#include "capsroute/synth.hpp"
#include "capsroute/train.hpp"

namespace capsroute {

using ConfigMap = std::map<std::string, std::string>;

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  std::array<double, 3> split{0.7, 0.15, 0.15};
};

struct ConfigField {
  std::string key;
  std::string doc;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Every recognised key, in documentation order.
const std::vector<ConfigField>& config_fields();

// "key = value" lines; '#' starts a comment; blank lines are ignored.
ConfigMap parse_config_text(std::string_view text);
ConfigMap read_config_file(const std::filesystem::path& path);

// Throws ConfigError on unknown keys or unparsable values.
void apply_config(ExperimentConfig& config, const ConfigMap& values);

// All keys with their current values; parse_config_text(to_config_text(c)) reproduces c.
std::string to_config_text(const ExperimentConfig& config);
// Only the model.*, loss.* and train.* keys.
std::string to_config_text(const ModelConfig& model, const TrainConfig& train);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace capsroute
