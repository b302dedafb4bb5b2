// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a plain-text "key = value" file plus command-line
// overrides. Blank lines and text after '#' are ignored. The first directive
// must be `config_version = 1`, and `seed` is mandatory.
//
//   config_version = 1
//   seed = 7
//   data.preset = company2
//   model.fusion = gate
//   train.epochs = auto
//
// RunConfig::keys() lists every key with its help text; the CLI derives one
// flag per key from that table (model.tower_widths -> --model-tower-widths).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "starplus/adam.hpp"
#include "starplus/dataset.hpp"
#include "starplus/model_config.hpp"
#include "starplus/synthetic.hpp"

namespace starplus {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kOutputRootEnv = "STARPLUS_OUTPUT_ROOT";

struct RunConfig {
  std::optional<std::uint64_t> seed;

  // Synthetic data, used when `train_path` is empty.
  std::string preset = "company1";
  std::size_t train_examples = 50000;
  std::size_t valid_examples = 10000;
  std::size_t test_examples = 10000;
  double domain_mix = 0.5;
  double effect_scale = 1.0;
  double feature_shift = 1.0;
  std::vector<std::size_t> vocab_sizes = SyntheticSpec{}.vocab_sizes;
  /// Generator seed; the run seed when unset.
  std::optional<std::uint64_t> data_seed;

  // File data: dataset caches, or CSV files read through `schema_path`.
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  std::filesystem::path schema_path;

  /// Architecture; fields and num_domains come from the data.
  ModelConfig model;
  std::size_t embedding_dim = 8;

  AdamConfig adam;
  BatchPlan batch;

  /// Fixed epoch count, or nullopt for validation-based stopping.
  std::optional<std::size_t> epochs;
  std::size_t max_epochs = 20;
  double min_improvement = 1e-4;
  /// Also evaluate on validation every N steps (0: epoch ends only).
  std::size_t eval_every = 0;

  std::filesystem::path output_dir = "run";

  std::vector<std::string> experiment_presets = {"company1", "company2", "alicpp"};
  /// Comma list from {2, 3, 4}, or "single" for one cell with the base config.
  std::string experiment_tables = "2,3,4";

  bool uses_synthetic() const { return train_path.empty(); }
  std::uint64_t run_seed() const;

  /// Seed present, paths exist, every sub-config valid.
  void validate() const;

  /// Sets one key from its textual value; unknown keys and bad values raise
  /// ErrorCode::config.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Canonical file text (every key, fixed order); load_run_config reads it
  /// back to an equal config.
  std::string to_text() const;

  /// output_dir, placed under $STARPLUS_OUTPUT_ROOT when relative and the
  /// variable is set.
  std::filesystem::path resolved_output_dir() const;

  /// SyntheticSpec for one preset with this config's generator settings.
  SyntheticSpec synthetic_spec(std::string_view preset_name) const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

/// "model.tower_widths" -> "model-tower-widths"
std::string flag_name(std::string_view key);

RunConfig parse_run_config(std::string_view text, std::string_view origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "key=value".
void apply_override(RunConfig& cfg, std::string_view assignment);

}  // namespace starplus
