#pragma once

// Run configuration: TOML files with [augment], [train], [loss] and [eval]
// sections, named presets for the eight benchmark datasets, and the JSON
// form written into run manifests.

#include "amc/eval.hpp"
#include "amc/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace amc {

struct EvalConfig {
  ProbeConfig probe;
  Index stability_node = 0;
  int stability_trials = 10;
  double stability_mask = 0.4;
  std::vector<double> sweep_ratios{0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  std::string preset = "cora";
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Names accepted by preset().
const std::vector<std::string>& preset_names();

/// Hyperparameters of one benchmark dataset. Throws ConfigError for
/// unknown names.
RunConfig preset(std::string_view name);

/// Parses TOML. An optional top-level `preset = "<name>"` selects the base
/// values (default "cora"); every other key overrides one field. Unknown
/// sections or keys, wrong value types and invalid values throw ConfigError
/// whose message starts with "<source>:<line>:<column>:" when a position
/// is known.
RunConfig parse_config(std::string_view text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& file);

/// The resolved configuration as TOML that parse_config reads back exactly.
std::string to_toml(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
/// Inverse of to_json; unknown keys are errors here too.
RunConfig config_from_json(const nlohmann::json& j);

struct ConfigKey {
  std::string section;
  std::string key;
  std::string default_value;  // cora preset
  std::string description;
};

/// Every accepted key, for help text.
std::vector<ConfigKey> config_keys();

}  // namespace amc
