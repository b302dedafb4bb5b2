// SPDX-License-Identifier: Apache-2.0

#include "starplus/training.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "json.hpp"

#include "starplus/error.hpp"
#include "starplus/loss.hpp"

namespace starplus {

namespace {

constexpr std::size_t kEvalChunk = 8192;

nlohmann::json row_json(const MetricRow& row) {
  nlohmann::json j;
  j["domain"] = row.domain < 0 ? nlohmann::json("all") : nlohmann::json(row.domain);
  j["examples"] = row.examples;
  j["positives"] = row.positives;
  j["auc"] = row.auc ? nlohmann::json(*row.auc) : nlohmann::json(nullptr);
  j["logloss"] = row.logloss;
  return j;
}

void log_record(std::ostream* log, const nlohmann::json& record) {
  if (log == nullptr) return;
  *log << record.dump() << '\n';
  log->flush();
}

void log_eval(std::ostream* log, std::size_t epoch, std::size_t step, const std::string& split,
              const MetricReport& r) {
  if (log == nullptr) return;
  nlohmann::json j;
  j["event"] = "eval";
  j["epoch"] = epoch;
  j["step"] = step;
  j["split"] = split;
  j["overall"] = row_json(r.overall);
  j["domains"] = nlohmann::json::array();
  for (const MetricRow& row : r.per_domain) j["domains"].push_back(row_json(row));
  log_record(log, j);
}

[[noreturn]] void numeric_abort(MultiDomainModel& model, std::size_t step, double loss,
                                const AdamConfig& adam) {
  std::vector<std::string> norms;
  for (const Param* p : model.store().params()) {
    norms.push_back(fmt::format("{}={:.6g}", p->name, frobenius_norm(p->grad)));
  }
  throw Error(ErrorCode::numeric,
              fmt::format("non-finite training state at step {} (loss {}, learning rate {}); "
                          "gradient norms: {}",
                          step, loss, adam.learning_rate, fmt::join(norms, " ")));
}

}  // namespace

std::vector<double> predict_dataset(MultiDomainModel& model, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(begin + kEvalChunk, data.size());
    rows.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) rows[i - begin] = i;
    const Matrix probs = model.predict(data.make_batch(rows));
    out.insert(out.end(), probs.data().begin(), probs.data().end());
  }
  return out;
}

MetricReport evaluate(MultiDomainModel& model, const Dataset& data) {
  check_compatible(model.config(), data);
  if (data.size() == 0) throw Error(ErrorCode::validation, "cannot evaluate an empty dataset");
  const std::vector<double> probs = predict_dataset(model, data);
  return report(probs, data.labels, data.domains);
}

TrainResult train(MultiDomainModel& model, const Dataset& train_data, const Dataset* valid_data,
                  const TrainOptions& options) {
  options.adam.validate();
  options.batch.validate();
  check_compatible(model.config(), train_data);
  if (valid_data != nullptr) check_compatible(model.config(), *valid_data);
  if (!options.epochs && valid_data == nullptr) {
    throw Error(ErrorCode::config, "validation-based stopping needs a validation set");
  }
  const std::size_t max_epochs = options.epochs.value_or(options.max_epochs);

  TrainResult result;
  std::vector<Param*> params = model.store().params();
  std::optional<double> previous_auc;

  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    model.set_mode(NormMode::training);
    const BatchSchedule schedule = plan_batches(train_data, options.batch, epoch);
    double loss_sum = 0.0;
    for (const auto& rows : schedule.batches) {
      const Batch batch = train_data.make_batch(rows);
      model.store().zero_grads();
      const Matrix logits = model.forward(batch);
      const BceResult bce = bce_loss(logits, batch.label_matrix());
      ++result.steps;
      if (!std::isfinite(bce.loss)) numeric_abort(model, result.steps, bce.loss, options.adam);
      model.backward(bce.grad);
      for (const Param* p : params) {
        if (!p->grad.all_finite()) numeric_abort(model, result.steps, bce.loss, options.adam);
      }
      adam_step(params, options.adam);
      loss_sum += bce.loss;

      if (options.eval_every > 0 && valid_data != nullptr &&
          result.steps % options.eval_every == 0) {
        log_eval(options.metric_log, epoch + 1, result.steps, "valid",
                 evaluate(model, *valid_data));
        model.set_mode(NormMode::training);
      }
    }
    const double mean_loss =
        schedule.batches.empty() ? 0.0 : loss_sum / static_cast<double>(schedule.batches.size());
    result.epoch_losses.push_back(mean_loss);
    ++result.epochs_run;
    {
      nlohmann::json j;
      j["event"] = "epoch";
      j["epoch"] = epoch + 1;
      j["step"] = result.steps;
      j["batches"] = schedule.batches.size();
      j["train_loss"] = mean_loss;
      log_record(options.metric_log, j);
    }

    if (valid_data != nullptr) {
      const MetricReport r = evaluate(model, *valid_data);
      log_eval(options.metric_log, epoch + 1, result.steps, "valid", r);
      result.valid_aucs.push_back(r.overall.auc);
      if (!options.epochs && epoch > 0) {
        const bool improved = r.overall.auc && previous_auc &&
                              *r.overall.auc >= *previous_auc + options.min_improvement;
        if (!improved) {
          result.stopped_early = true;
          break;
        }
      }
      previous_auc = r.overall.auc;
    }
  }
  model.set_mode(NormMode::inference);
  return result;
}

ModelConfig model_config_for(const Dataset& data, const ModelConfig& base,
                             std::size_t embedding_dim) {
  ModelConfig cfg = base;
  cfg.num_domains = data.num_domains();
  cfg.fields.clear();
  for (const DataField& f : data.fields) cfg.fields.push_back({f.name, f.vocab_size, embedding_dim});
  return cfg;
}

void check_compatible(const ModelConfig& config, const Dataset& data) {
  std::vector<std::string> problems;
  if (config.num_domains != data.num_domains()) {
    problems.push_back(fmt::format("domains: expected {}, found {}", config.num_domains,
                                   data.num_domains()));
  }
  const std::size_t n = std::max(config.fields.size(), data.fields.size());
  for (std::size_t f = 0; f < n; ++f) {
    const std::string expected =
        f < config.fields.size()
            ? fmt::format("{}:{}", config.fields[f].name, config.fields[f].vocab_size)
            : "<none>";
    const std::string found =
        f < data.fields.size() ? fmt::format("{}:{}", data.fields[f].name, data.fields[f].vocab_size)
                               : "<none>";
    if (expected != found) {
      problems.push_back(fmt::format("field {}: expected {}, found {}", f, expected, found));
    }
  }
  if (!problems.empty()) {
    throw Error(ErrorCode::schema, fmt::format("model/data schema mismatch: {}",
                                               fmt::join(problems, "; ")));
  }
}

}  // namespace starplus
