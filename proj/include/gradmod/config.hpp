#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradmod/generator.hpp"
#include "gradmod/gmm.hpp"
#include "gradmod/inversion.hpp"
#include "gradmod/losses.hpp"
#include "gradmod/optimizer.hpp"

namespace gradmod {

enum class Arm { Gmm, Baseline, Both };

std::string to_string(Arm a);
Arm arm_from_string(const std::string& s);

struct Seeds {
  std::uint64_t generator = 0;
  std::uint64_t target = 1;
  std::uint64_t perturbation = 2;
  std::uint64_t noise = 3;
  std::uint64_t localization = 4;
  std::uint64_t evaluation = 5;
  std::uint64_t extractors = 6;
  std::uint64_t gmm = 7;
  std::uint64_t directions = 8;

  bool operator==(const Seeds&) const = default;
};

struct EditConfig {
  std::size_t directions = 4;
  std::size_t direction_index = 0;
  double magnitude = 1.0;
  std::size_t first_layer = 0;
  /// Exclusive end of the edited W+ rows; empty means every row.
  std::optional<std::size_t> last_layer;

  bool operator==(const EditConfig&) const = default;
};

struct ExperimentConfig {
  std::string preset;  // empty when no preset was used
  Arm arm = Arm::Gmm;
  std::size_t iterations = 300;
  InitOptions init;
  /// Pixel noise std for out-of-range targets (0: generator-realizable).
  double target_noise = 0.0;
  std::size_t localization_batch = 1;
  std::size_t locality_samples = 8;
  std::size_t locality_every = 50;
  /// When positive, the matched-loss threshold is initial MSE / match_factor.
  double match_factor = 0.0;
  bool stop_at_match = false;
  std::string output_dir = "out";

  GeneratorConfig generator;
  GmmConfig gmm;
  LossWeights loss;
  OptimizerConfig optimizer;
  /// Learning rate of the direct fine-tuning arm.
  double baseline_lr = 0.01;
  Seeds seeds;
  EditConfig edit;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Where configuration values come from, lowest precedence first:
/// preset < file < GRADMOD_OUTPUT_DIR (output directory only) < overrides.
struct ConfigSources {
  std::optional<std::string> preset;
  std::optional<std::filesystem::path> file;
  std::optional<std::string> env_output_dir;
  /// "section.key" -> value
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// Named presets: faces, afhq, cars, horses, church.
std::vector<std::string> preset_names();
/// The "section.key" -> value entries a preset sets.
std::map<std::string, std::string> preset_values(const std::string& name);

/// Every recognised "section.key".
const std::vector<std::string>& config_keys();
/// Keys that must be given when no preset is used.
const std::vector<std::string>& required_keys();

ExperimentConfig parse_config(const ConfigSources& sources);
/// Parses INI text (same rules as a config file, no preset unless the text
/// names one).
ExperimentConfig parse_config_text(const std::string& text);

/// Complete INI rendering of a resolved config; parses back to an equal value.
std::string to_ini(const ExperimentConfig& config);

/// Flat "section.key" -> value view of a resolved config.
std::map<std::string, std::string> to_flat(const ExperimentConfig& config);

InversionSettings inversion_settings(const ExperimentConfig& config);

}  // namespace gradmod
