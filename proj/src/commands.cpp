// SPDX-License-Identifier: Apache-2.0

#include "starplus/commands.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>

#include "starplus/csv_io.hpp"
#include "starplus/error.hpp"
#include "starplus/grad_check.hpp"
#include "starplus/loss.hpp"
#include "starplus/strings.hpp"
#include "starplus/synthetic.hpp"

namespace starplus {

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::io,
                fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw Error(ErrorCode::io, fmt::format("write failed for '{}'", path.string()));
}

std::string metric_cell(const std::optional<double>& v) {
  return v ? fmt::format("{:.5f}", *v) : std::string("NA");
}

/// Left-aligns the first `left` columns, right-aligns the rest.
std::string render_grid(const std::vector<std::vector<std::string>>& rows, std::size_t left) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < width.size(); ++i) {
      const std::string& cell = i < row.size() ? row[i] : std::string();
      if (i > 0) line += "  ";
      line += i < left ? fmt::format("{:<{}}", cell, width[i]) : fmt::format("{:>{}}", cell, width[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string cell_dir_name(const ExperimentCell& c) {
  return fmt::format("{}-{}-{}-{}", c.preset, to_string(c.architecture), to_string(c.fusion),
                     to_string(c.norm));
}

std::string fusion_title(FusionType f) {
  switch (f) {
    case FusionType::builtin: return "-";
    case FusionType::add: return "Add";
    case FusionType::adaptive_add: return "Adaptive Add";
    case FusionType::gate: return "Gate";
    case FusionType::concat: return "Concat";
  }
  return "?";
}

std::string norm_title(NormKind n) {
  switch (n) {
    case NormKind::none: return "No Normalization";
    case NormKind::layer: return "LayerNorm";
    case NormKind::batch: return "BatchNorm";
    case NormKind::partition: return "PartitionNorm";
  }
  return "?";
}

std::string arch_title(Architecture a) { return a == Architecture::star ? "Star" : "Star+"; }

}  // namespace

// ------------------------------------------------------------------ data

Dataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& schema) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::io, fmt::format("data file '{}' does not exist", path.string()));
  }
  if (path.extension() == ".csv") {
    if (schema.empty()) {
      throw Error(ErrorCode::config,
                  fmt::format("'{}' is a CSV file; a schema file is required", path.string()));
    }
    return ingest_csv(path, read_schema(schema)).dataset;
  }
  return read_dataset_cache(path);
}

Splits synthetic_splits(const RunConfig& cfg, const std::string& preset_name) {
  const SyntheticGenerator gen(cfg.synthetic_spec(preset_name));
  Splits s;
  s.train = gen.generate(cfg.train_examples, 0);
  if (cfg.valid_examples > 0) s.valid = gen.generate(cfg.valid_examples, 1);
  if (cfg.test_examples > 0) s.test = gen.generate(cfg.test_examples, 2);
  return s;
}

Splits load_splits(const RunConfig& cfg) {
  if (cfg.uses_synthetic()) return synthetic_splits(cfg, cfg.preset);
  Splits s;
  s.train = load_dataset(cfg.train_path, cfg.schema_path);
  if (!cfg.valid_path.empty()) s.valid = load_dataset(cfg.valid_path, cfg.schema_path);
  if (!cfg.test_path.empty()) s.test = load_dataset(cfg.test_path, cfg.schema_path);
  return s;
}

// ------------------------------------------------------------------ gen

GenFiles cmd_gen(const RunConfig& cfg, std::size_t examples, std::uint64_t stream,
                 const std::string& name, std::ostream& out) {
  (void)cfg.run_seed();
  if (examples == 0) throw Error(ErrorCode::validation, "cannot generate an empty dataset (n = 0)");
  const SyntheticGenerator gen(cfg.synthetic_spec(cfg.preset));
  const Dataset data = gen.generate(examples, stream);

  const std::filesystem::path dir = cfg.resolved_output_dir();
  ensure_dir(dir);
  const std::string base = name.empty() ? cfg.preset : name;
  GenFiles files{dir / (base + ".csv"), dir / (base + ".schema"), dir / (base + ".spt")};
  write_csv(files.csv, data);
  write_schema(files.schema, schema_for(data));
  write_dataset_cache(files.cache, data);

  out << domain_summary_table(data, fmt::format("{} ({} examples, seed {})", cfg.preset,
                                                examples, gen.spec().seed));
  out << fmt::format("wrote {}\nwrote {}\nwrote {}\n", files.csv.string(), files.schema.string(),
                     files.cache.string());
  return files;
}

// ------------------------------------------------------------------ train

TrainOutcome train_run(const RunConfig& cfg, const Splits& data, const std::filesystem::path& dir) {
  cfg.validate();
  ModelConfig model_cfg = model_config_for(data.train, cfg.model, cfg.embedding_dim);
  model_cfg.seed = cfg.run_seed();
  model_cfg.validate();

  ensure_dir(dir);
  write_text(dir / "config.txt", cfg.to_text());

  TrainOutcome outcome;
  outcome.model_config = model_cfg;
  outcome.checkpoint = dir / "checkpoint.spt";
  outcome.metric_log = dir / "metrics.jsonl";

  MultiDomainModel model(model_cfg);
  std::ofstream log(outcome.metric_log, std::ios::binary | std::ios::trunc);
  if (!log) throw Error(ErrorCode::io, fmt::format("cannot write '{}'", outcome.metric_log.string()));

  TrainOptions opts;
  opts.adam = cfg.adam;
  opts.batch = cfg.batch;
  opts.batch.seed = cfg.run_seed();
  opts.epochs = cfg.epochs;
  opts.max_epochs = cfg.max_epochs;
  opts.min_improvement = cfg.min_improvement;
  opts.eval_every = cfg.eval_every;
  opts.metric_log = &log;
  const Dataset* valid = data.valid ? &*data.valid : nullptr;
  outcome.result = train(model, data.train, valid, opts);

  model.save(outcome.checkpoint);
  const Dataset* final_split = data.test ? &*data.test : valid;
  outcome.report_split = data.test ? "test" : "valid";
  if (final_split != nullptr) {
    outcome.report = evaluate(model, *final_split);
    write_text(dir / "report.csv", report_csv(outcome.report, outcome.report_split));
    write_text(dir / "report.txt", report_table(outcome.report, outcome.report_split));
  }
  return outcome;
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Splits data = load_splits(cfg);
  out << domain_summary_table(data.train, fmt::format("training data ({} examples)",
                                                      data.train.size()));
  const TrainOutcome outcome = train_run(cfg, data, cfg.resolved_output_dir());
  out << fmt::format("trained {} epoch(s), {} steps{}; final epoch loss {:.6f}\n",
                     outcome.result.epochs_run, outcome.result.steps,
                     outcome.result.stopped_early ? " (validation AUC stalled)" : "",
                     outcome.result.epoch_losses.empty() ? 0.0
                                                         : outcome.result.epoch_losses.back());
  if (data.valid || data.test) out << report_table(outcome.report, outcome.report_split);
  out << fmt::format("checkpoint {}\nmetric log {}\n", outcome.checkpoint.string(),
                     outcome.metric_log.string());
  return outcome;
}

// ------------------------------------------------------------------ eval

MetricReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                      const std::filesystem::path& schema, const std::string& split,
                      const std::filesystem::path& out_dir, std::ostream& out) {
  MultiDomainModel model = MultiDomainModel::load(checkpoint);
  const Dataset dataset = load_dataset(data, schema);
  const MetricReport r = evaluate(model, dataset);
  const std::string table = report_table(r, split);
  out << table;
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text(out_dir / fmt::format("eval_{}.csv", split), report_csv(r, split));
    write_text(out_dir / fmt::format("eval_{}.txt", split), table);
  }
  return r;
}

// ------------------------------------------------------------------ experiment

const ExperimentCell* ExperimentResult::find(const std::string& preset, Architecture a,
                                             FusionType f, NormKind n) const {
  for (const ExperimentCell& c : cells) {
    if (c.preset == preset && c.architecture == a && c.fusion == f && c.norm == n) return &c;
  }
  return nullptr;
}

std::string preset_title(const std::string& preset_name) {
  if (preset_name == "company1") return "Company 1";
  if (preset_name == "company2") return "Company 2";
  if (preset_name == "alicpp") return "Ali-CCP";
  return preset_name;
}

namespace {

struct CellKey {
  Architecture architecture;
  FusionType fusion;
  NormKind norm;
};

constexpr std::array<FusionType, 4> kTable2Fusions = {FusionType::add, FusionType::concat,
                                                      FusionType::gate, FusionType::adaptive_add};
constexpr std::array<NormKind, 4> kTable3Norms = {NormKind::none, NormKind::layer,
                                                  NormKind::batch, NormKind::partition};

std::vector<CellKey> cells_for_tables(const std::set<std::string>& tables) {
  std::vector<CellKey> keys;
  auto add = [&](Architecture a, FusionType f, NormKind n) {
    for (const CellKey& k : keys) {
      if (k.architecture == a && k.fusion == f && k.norm == n) return;
    }
    keys.push_back({a, f, n});
  };
  if (tables.count("2")) {
    add(Architecture::star, FusionType::builtin, NormKind::partition);
    for (FusionType f : kTable2Fusions) add(Architecture::star_plus, f, NormKind::layer);
  }
  if (tables.count("3")) {
    for (NormKind n : kTable3Norms) add(Architecture::star, FusionType::builtin, n);
    for (NormKind n : kTable3Norms) add(Architecture::star_plus, FusionType::adaptive_add, n);
  }
  if (tables.count("4")) {
    add(Architecture::star, FusionType::builtin, NormKind::layer);
    add(Architecture::star_plus, FusionType::adaptive_add, NormKind::layer);
  }
  return keys;
}

std::string render_table2(const ExperimentResult& r, const std::vector<std::string>& columns) {
  std::vector<std::vector<std::string>> rows(2);
  rows[0] = {"Model", "Fusion Type"};
  rows[1] = {"", ""};
  for (const std::string& p : columns) {
    rows[0].insert(rows[0].end(), {preset_title(p), ""});
    rows[1].insert(rows[1].end(), {"Loss", "AUC"});
  }
  auto add_row = [&](Architecture a, FusionType f, NormKind n) {
    std::vector<std::string> row{arch_title(a), fusion_title(f)};
    for (const std::string& p : columns) {
      const ExperimentCell* c = r.find(p, a, f, n);
      if (c == nullptr || !c->report) {
        row.insert(row.end(), {"FAIL", "FAIL"});
      } else {
        row.push_back(fmt::format("{:.5f}", c->report->overall.logloss));
        row.push_back(metric_cell(c->report->overall.auc));
      }
    }
    rows.push_back(std::move(row));
  };
  add_row(Architecture::star, FusionType::builtin, NormKind::partition);
  for (FusionType f : kTable2Fusions) add_row(Architecture::star_plus, f, NormKind::layer);
  return "Results of fusion techniques (test split)\n" + render_grid(rows, 2);
}

std::string render_table3(const ExperimentResult& r, const std::vector<std::string>& columns) {
  std::vector<std::vector<std::string>> rows(2);
  rows[0] = {"Type"};
  rows[1] = {""};
  for (const std::string& p : columns) {
    rows[0].insert(rows[0].end(), {preset_title(p), ""});
    rows[1].insert(rows[1].end(), {"Star", "Star+"});
  }
  for (NormKind n : kTable3Norms) {
    std::vector<std::string> row{norm_title(n)};
    for (const std::string& p : columns) {
      for (const auto& [a, f] : {std::pair{Architecture::star, FusionType::builtin},
                                 std::pair{Architecture::star_plus, FusionType::adaptive_add}}) {
        const ExperimentCell* c = r.find(p, a, f, n);
        row.push_back(c == nullptr || !c->report ? "FAIL" : metric_cell(c->report->overall.auc));
      }
    }
    rows.push_back(std::move(row));
  }
  return "Results of normalization techniques, AUC (test split)\n" + render_grid(rows, 1);
}

std::string render_table4(const ExperimentResult& r, const std::vector<std::string>& columns) {
  std::size_t max_domains = 0;
  for (const ExperimentCell& c : r.cells) {
    if (c.report) {
      for (const MetricRow& row : c.report->per_domain) {
        max_domains = std::max(max_domains, static_cast<std::size_t>(row.domain) + 1);
      }
    }
  }
  std::vector<std::vector<std::string>> rows(1);
  rows[0] = {"", "", "all"};
  for (std::size_t d = 0; d < max_domains; ++d) rows[0].push_back(std::to_string(d + 1));
  for (const std::string& p : columns) {
    bool first = true;
    for (const auto& [a, f] : {std::pair{Architecture::star, FusionType::builtin},
                               std::pair{Architecture::star_plus, FusionType::adaptive_add}}) {
      std::vector<std::string> row{first ? preset_title(p) : "", arch_title(a)};
      first = false;
      const ExperimentCell* c = r.find(p, a, f, NormKind::layer);
      if (c == nullptr || !c->report) {
        row.resize(3 + max_domains, "FAIL");
      } else {
        row.push_back(metric_cell(c->report->overall.auc));
        for (std::size_t d = 0; d < max_domains; ++d) {
          const MetricRow* m = c->report->find_domain(static_cast<int>(d));
          row.push_back(m == nullptr ? "-" : metric_cell(m->auc));
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return "AUC per domain, layer norm (test split)\n" + render_grid(rows, 2);
}

std::string cells_csv(const ExperimentResult& r) {
  std::string out = "preset,architecture,fusion,norm,domain,examples,positives,auc,logloss,error\n";
  for (const ExperimentCell& c : r.cells) {
    const std::string prefix = fmt::format("{},{},{},{}", c.preset, to_string(c.architecture),
                                           to_string(c.fusion), to_string(c.norm));
    if (!c.report) {
      out += fmt::format("{},all,,,,,\"{}\"\n", prefix, c.error);
      continue;
    }
    auto line = [&](const MetricRow& m) {
      out += fmt::format("{},{},{},{},{},{:.17g},\n", prefix,
                         m.domain < 0 ? std::string("all") : std::to_string(m.domain), m.examples,
                         m.positives, m.auc ? fmt::format("{:.17g}", *m.auc) : "NA", m.logloss);
    };
    line(c.report->overall);
    for (const MetricRow& m : c.report->per_domain) line(m);
  }
  return out;
}

}  // namespace

ExperimentResult cmd_experiment(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const std::filesystem::path dir = cfg.resolved_output_dir();
  ensure_dir(dir);
  ExperimentResult result;

  std::set<std::string> tables;
  const bool single = cfg.experiment_tables == "single";
  if (!single) {
    for (const auto& t : split(cfg.experiment_tables, ',')) tables.insert(trim(t));
  }
  const std::vector<CellKey> keys =
      single ? std::vector<CellKey>{{cfg.model.architecture, cfg.model.fusion.type, cfg.model.norm}}
             : cells_for_tables(tables);
  const std::vector<std::string> columns =
      single || !cfg.uses_synthetic() ? std::vector<std::string>{cfg.uses_synthetic() ? cfg.preset
                                                                                      : "data"}
                                      : cfg.experiment_presets;

  for (const std::string& column : columns) {
    std::optional<Splits> data;
    std::string data_error;
    try {
      data = column == "data" ? load_splits(cfg) : synthetic_splits(cfg, column);
    } catch (const Error& e) {
      data_error = fmt::format("{}: {}", error_tag(e.code()), e.what());
    }
    for (const CellKey& key : keys) {
      ExperimentCell cell;
      cell.preset = column;
      cell.architecture = key.architecture;
      cell.fusion = key.fusion;
      cell.norm = key.norm;
      if (!data) {
        cell.error = data_error;
      } else {
        RunConfig cell_cfg = cfg;
        cell_cfg.model.architecture = key.architecture;
        cell_cfg.model.fusion.type = key.fusion;
        cell_cfg.model.norm = key.norm;
        try {
          TrainOutcome o = train_run(cell_cfg, *data, dir / "cells" / cell_dir_name(cell));
          cell.report = std::move(o.report);
        } catch (const Error& e) {
          cell.error = fmt::format("{}: {}", error_tag(e.code()), e.what());
        }
      }
      out << fmt::format("cell {:<40} {}\n", cell_dir_name(cell),
                         cell.report ? fmt::format("auc {} logloss {:.5f}",
                                                   metric_cell(cell.report->overall.auc),
                                                   cell.report->overall.logloss)
                                     : "FAILED " + cell.error);
      result.cells.push_back(std::move(cell));
    }
  }

  if (single) {
    const ExperimentCell& c = result.cells.front();
    result.tables.emplace_back("single", c.report ? report_table(*c.report, "test")
                                                  : "FAILED " + c.error + "\n");
  } else {
    if (tables.count("2")) result.tables.emplace_back("table2", render_table2(result, columns));
    if (tables.count("3")) result.tables.emplace_back("table3", render_table3(result, columns));
    if (tables.count("4")) result.tables.emplace_back("table4", render_table4(result, columns));
  }
  for (const auto& [name, text] : result.tables) {
    write_text(dir / (name + ".txt"), text);
    out << '\n' << text;
  }
  write_text(dir / "cells.csv", cells_csv(result));
  return result;
}

// ------------------------------------------------------------------ gradcheck

ModelConfig gradcheck_model_config(Architecture a, FusionType f, NormKind n,
                                   std::size_t num_domains, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.architecture = a;
  cfg.num_domains = num_domains;
  cfg.fields = {{"a", 7, 3}, {"b", 5, 3}, {"c", 4, 2}};
  cfg.tower_widths = {6, 5};
  cfg.tower_output_dim = 4;
  cfg.domain_embedding_dim = 3;
  cfg.norm = n;
  cfg.fusion.type = f;
  cfg.fusion.c_d = 0.7;
  cfg.fusion.c_s = 1.3;
  cfg.fusion.c_a = -0.4;
  cfg.fusion.gate_hidden = 4;
  cfg.fusion.concat_head_widths = {5};
  cfg.seed = seed;
  return cfg;
}

Batch gradcheck_batch(const ModelConfig& cfg, std::size_t size, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x9c}};
  Rng rng(seq);
  Batch b;
  b.num_fields = cfg.fields.size();
  for (std::size_t i = 0; i < size; ++i) {
    for (const FieldSpec& f : cfg.fields) {
      b.feature_ids.push_back(
          std::uniform_int_distribution<std::uint32_t>(0, static_cast<std::uint32_t>(f.vocab_size - 1))(rng));
    }
    b.domains.push_back(static_cast<std::uint32_t>(i * cfg.num_domains / size));
    b.labels.push_back(static_cast<std::uint8_t>(std::bernoulli_distribution(0.5)(rng)));
  }
  return b;
}

void jitter_params(MultiDomainModel& model, double scale, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x717}};
  Rng rng(seq);
  std::normal_distribution<double> normal(0.0, scale);
  for (Param* p : model.store().params()) {
    for (double& v : p->value.data()) v += normal(rng);
  }
}

GradCheckReport check_model_gradients(MultiDomainModel& model, const Batch& batch,
                                      const GradCheckOptions& options) {
  const Matrix labels = batch.label_matrix();
  std::vector<Param*> params = model.store().params();
  auto closure = [&] {
    model.store().zero_grads();
    const Matrix logits = model.forward(batch);
    BceResult bce = bce_loss(logits, labels);
    model.backward(bce.grad);
    return bce.loss;
  };
  return grad_check(closure, params, options);
}

std::vector<GradcheckCase> cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  if (options.batch_size < 1 || options.batch_size > 16) {
    throw Error(ErrorCode::config,
                fmt::format("gradcheck batch size must be in [1, 16], got {}", options.batch_size));
  }
  std::vector<Architecture> archs;
  if (options.architecture == "all") {
    archs = {Architecture::star, Architecture::star_plus};
  } else {
    archs = {parse_architecture(options.architecture)};
  }
  std::vector<NormKind> norms;
  if (options.norm == "all") {
    norms = {NormKind::none, NormKind::batch, NormKind::layer, NormKind::partition};
  } else {
    norms = {parse_norm_kind(options.norm)};
  }

  std::vector<GradcheckCase> cases;
  for (Architecture a : archs) {
    std::vector<FusionType> fusions;
    if (options.fusion == "all") {
      if (a == Architecture::star) {
        fusions = {FusionType::builtin};
      } else {
        fusions = {FusionType::add, FusionType::adaptive_add, FusionType::gate, FusionType::concat};
      }
    } else {
      const FusionType f = parse_fusion_type(options.fusion);
      const bool valid = (a == Architecture::star) == (f == FusionType::builtin);
      if (!valid && options.architecture == "all") continue;
      fusions = {f};
    }
    for (FusionType f : fusions) {
      for (NormKind n : norms) {
        GradcheckCase c;
        c.architecture = a;
        c.fusion = f;
        c.norm = n;
        const ModelConfig cfg = gradcheck_model_config(a, f, n, options.num_domains, options.seed);
        MultiDomainModel model(cfg);
        jitter_params(model, 0.1, options.seed);
        model.set_mode(NormMode::training);
        model.set_backward_fault(options.inject_bug);
        const Batch batch = gradcheck_batch(cfg, options.batch_size, options.seed);
        GradCheckOptions gc;
        gc.tolerance = options.tolerance;
        c.report = check_model_gradients(model, batch, gc);
        out << fmt::format("{:<9} {:<12} {:<9} {}  max_rel_err {:.3e}  checked {}  skipped {}\n",
                           to_string(a), to_string(f), to_string(n),
                           c.report.passed ? "PASS" : "FAIL", c.report.max_rel_error,
                           c.report.checked, c.report.skipped);
        if (!c.report.passed) {
          const GradCheckEntry& w = c.report.worst;
          out << fmt::format("  worst {}[{},{}] analytic {:.9g} numeric {:.9g}\n", w.param, w.row,
                             w.col, w.analytic, w.numeric);
        }
        cases.push_back(std::move(c));
      }
    }
  }
  if (cases.empty()) throw Error(ErrorCode::config, "gradcheck selection matches no valid combination");
  return cases;
}

}  // namespace starplus
