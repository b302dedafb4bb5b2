// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training with BCE and Adam, and dataset evaluation.

#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include "starplus/adam.hpp"
#include "starplus/dataset.hpp"
#include "starplus/metrics.hpp"
#include "starplus/model.hpp"

namespace starplus {

struct TrainOptions {
  AdamConfig adam;
  BatchPlan batch;
  /// Fixed epoch count; nullopt stops after the first epoch whose validation
  /// AUC does not beat the previous epoch by at least `min_improvement`.
  std::optional<std::size_t> epochs;
  std::size_t max_epochs = 20;
  double min_improvement = 1e-4;
  std::size_t eval_every = 0;
  /// JSON-lines metric log; one record per epoch and per evaluation.
  std::ostream* metric_log = nullptr;
};

struct TrainResult {
  std::size_t epochs_run = 0;
  std::size_t steps = 0;
  /// Mean training batch loss of each epoch.
  std::vector<double> epoch_losses;
  /// Overall validation AUC after each epoch (when a validation set exists).
  std::vector<std::optional<double>> valid_aucs;
  bool stopped_early = false;
};

/// Probabilities for every row of `data`, in inference mode.
std::vector<double> predict_dataset(MultiDomainModel& model, const Dataset& data);

MetricReport evaluate(MultiDomainModel& model, const Dataset& data);

/// Trains in place. Leaves the model in inference mode. A non-finite loss or
/// gradient aborts with ErrorCode::numeric naming the step, the learning rate
/// and the gradient norm of every param.
TrainResult train(MultiDomainModel& model, const Dataset& train_data, const Dataset* valid_data,
                  const TrainOptions& options);

/// ModelConfig for `data`: fields and domain count from the data, everything
/// else from `base`.
ModelConfig model_config_for(const Dataset& data, const ModelConfig& base,
                             std::size_t embedding_dim);

/// Throws ErrorCode::schema listing every mismatch between what `config`
/// expects and what `data` provides.
void check_compatible(const ModelConfig& config, const Dataset& data);

}  // namespace starplus
