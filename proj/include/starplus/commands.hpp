// SPDX-License-Identifier: Apache-2.0
//
// The operations behind the command-line tool. Each writes human-readable
// output to `out` and files under the configured output directory; failures
// surface as starplus::Error.

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "starplus/dataset.hpp"
#include "starplus/grad_check.hpp"
#include "starplus/metrics.hpp"
#include "starplus/model.hpp"
#include "starplus/run_config.hpp"
#include "starplus/training.hpp"

namespace starplus {

struct Splits {
  Dataset train;
  std::optional<Dataset> valid;
  std::optional<Dataset> test;
};

/// Synthetic splits (generator streams 0, 1, 2 of one world) or files.
Splits load_splits(const RunConfig& cfg);
Splits synthetic_splits(const RunConfig& cfg, const std::string& preset_name);

/// A dataset cache, or a CSV read through `schema` (strict).
Dataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& schema = {});

// ---------------------------------------------------------------- gen

struct GenFiles {
  std::filesystem::path csv;
  std::filesystem::path schema;
  std::filesystem::path cache;
};

/// Generates `examples` rows of the configured preset and writes
/// <dir>/<name>.csv, .schema and .spt (dataset cache). Prints the per-domain
/// share/CTR table.
GenFiles cmd_gen(const RunConfig& cfg, std::size_t examples, std::uint64_t stream,
                 const std::string& name, std::ostream& out);

// ---------------------------------------------------------------- train

struct TrainOutcome {
  ModelConfig model_config;
  TrainResult result;
  /// Test report, or validation report when there is no test split.
  MetricReport report;
  std::string report_split;
  std::filesystem::path checkpoint;
  std::filesystem::path metric_log;
};

/// Trains on `data` with the settings of `cfg`, writing checkpoint.spt,
/// metrics.jsonl, config.txt and report.{csv,txt} into `dir`.
TrainOutcome train_run(const RunConfig& cfg, const Splits& data, const std::filesystem::path& dir);

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& out);

// ---------------------------------------------------------------- eval

/// Evaluates a checkpoint on a dataset. When `out_dir` is non-empty the
/// report is written to <out_dir>/eval_<split>.{csv,txt}.
MetricReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                      const std::filesystem::path& schema, const std::string& split,
                      const std::filesystem::path& out_dir, std::ostream& out);

// ---------------------------------------------------------------- experiment

struct ExperimentCell {
  std::string preset;
  Architecture architecture = Architecture::star_plus;
  FusionType fusion = FusionType::adaptive_add;
  NormKind norm = NormKind::layer;
  std::optional<MetricReport> report;
  /// "E_TAG: message" when the cell failed.
  std::string error;
};

struct ExperimentResult {
  std::vector<ExperimentCell> cells;
  /// Rendered tables keyed "table2", "table3", "table4" or "single".
  std::vector<std::pair<std::string, std::string>> tables;

  const ExperimentCell* find(const std::string& preset, Architecture a, FusionType f,
                             NormKind n) const;
};

/// Display name of a preset column ("Company 1", "Ali-CCP").
std::string preset_title(const std::string& preset_name);

/// Trains every distinct cell the requested tables need (test-split
/// metrics), then renders the tables into <dir>/<table>.txt plus cells.csv.
/// A failing cell is recorded and the rest continue.
ExperimentResult cmd_experiment(const RunConfig& cfg, std::ostream& out);

// ---------------------------------------------------------------- gradcheck

struct GradcheckOptions {
  /// "all" or a single value for each axis.
  std::string architecture = "all";
  std::string fusion = "all";
  std::string norm = "all";
  std::size_t batch_size = 8;
  std::size_t num_domains = 3;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  /// Corrupts one backward pass on purpose; every check should then fail.
  bool inject_bug = false;
};

struct GradcheckCase {
  Architecture architecture = Architecture::star_plus;
  FusionType fusion = FusionType::adaptive_add;
  NormKind norm = NormKind::layer;
  GradCheckReport report;
};

/// Small model used by gradient checks: three fields, two hidden layers.
ModelConfig gradcheck_model_config(Architecture a, FusionType f, NormKind n,
                                   std::size_t num_domains, std::uint64_t seed);

/// Random batch of `size` rows whose domains form contiguous blocks.
Batch gradcheck_batch(const ModelConfig& cfg, std::size_t size, std::uint64_t seed);

/// Moves every param off its structured initial value by N(0, scale^2).
void jitter_params(MultiDomainModel& model, double scale, std::uint64_t seed);

/// Full-model check of one combination on one batch.
GradCheckReport check_model_gradients(MultiDomainModel& model, const Batch& batch,
                                      const GradCheckOptions& options);

/// Runs every selected valid combination. Batch size must be in [1, 16].
std::vector<GradcheckCase> cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

}  // namespace starplus
