#pragma once

// Experiment configuration: a flat JSON object of key/value pairs. Every key
// except total_epochs and warmup_epochs has a default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "remixlab/synth.hpp"
#include "remixlab/train.hpp"

namespace remixlab::config {

enum class SuiteKind { Single, Ablation, FusionSweep };
SuiteKind parse_suite(std::string_view key);
std::string to_string(SuiteKind s);

/// Environment variable naming the root for relative output directories.
inline constexpr const char* kOutputRootEnv = "REMIXLAB_OUTPUT_ROOT";

struct ExperimentConfig {
  data::SynthSpec synth;
  /// When false, each run's seed also seeds data generation and the split.
  bool fixed_data_seed = false;
  train::TrainConfig train;
  double train_frac = 0.8;
  double val_frac = 0.1;
  std::filesystem::path out_dir = "remixlab_runs";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  SuiteKind suite = SuiteKind::Single;
  int workers = 1;
  /// The flat object this config was built from (after overrides).
  nlohmann::json raw;

  /// SynthSpec and TrainConfig of the run with the given seed.
  data::SynthSpec synth_for(std::uint64_t seed) const;
  train::TrainConfig train_for(std::uint64_t seed) const;
};

/// Builds and validates a config. Unknown keys, wrong types, missing required
/// keys and violated constraints raise ConfigError naming the field.
ExperimentConfig parse(const nlohmann::json& flat);
/// Reads a JSON object from disk (ConfigError on I/O or syntax problems).
nlohmann::json read_file(const std::filesystem::path& path);
ExperimentConfig load(const std::filesystem::path& path);

/// Sets `key` in a flat config from command-line text. Values that parse as
/// JSON keep their type; anything else is stored as a string.
void set_override(nlohmann::json& flat, const std::string& key, const std::string& value);

const std::vector<std::string>& known_keys();

/// Relative paths are placed under $REMIXLAB_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& p);

nlohmann::json to_json(const data::SynthSpec& s);
nlohmann::json to_json(const train::TrainConfig& c);

}  // namespace remixlab::config
