// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "starplus/commands.hpp"
#include "starplus/error.hpp"
#include "starplus/loss.hpp"
#include "starplus/metrics.hpp"
#include "starplus/normalization.hpp"
#include "starplus/synthetic.hpp"
#include "starplus/training.hpp"

using namespace starplus;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("starplus_acceptance_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

bool is_number(const std::string& s) {
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return !s.empty() && end == s.c_str() + s.size();
}

// Checks a rendered grid: title line, a header naming the dataset columns in
// order, a sub-header repeating `metrics` per dataset, then one line per
// expected row label followed by exactly 2 * datasets numeric cells.
std::string check_grid(const std::string& text, const std::vector<std::string>& datasets,
                       const std::vector<std::string>& metrics,
                       const std::vector<std::string>& row_labels) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  if (lines.size() != 3 + row_labels.size()) {
    return fmt::format("expected {} lines, found {}", 3 + row_labels.size(), lines.size());
  }
  std::size_t pos = 0;
  for (const std::string& d : datasets) {
    pos = lines[1].find(d, pos);
    if (pos == std::string::npos) return fmt::format("header lacks '{}' in order", d);
  }
  std::vector<std::string> expected_sub;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    expected_sub.insert(expected_sub.end(), metrics.begin(), metrics.end());
  }
  if (split_ws(lines[2]) != expected_sub) return "metric sub-header differs";
  const std::size_t cells = datasets.size() * metrics.size();
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    const std::string& line = lines[3 + r];
    if (line.rfind(row_labels[r], 0) != 0) {
      return fmt::format("row {} should start with '{}'", r + 1, row_labels[r]);
    }
    const auto tok = split_ws(line.substr(row_labels[r].size()));
    if (tok.size() != cells) return fmt::format("row '{}' has {} cells", row_labels[r], tok.size());
    for (const auto& t : tok) {
      if (!is_number(t)) return fmt::format("row '{}' has non-numeric cell '{}'", row_labels[r], t);
    }
  }
  return {};
}

std::filesystem::path source_dir() {
  if (const char* env = std::getenv("STARPLUS_SOURCE_DIR")) return env;
  return STARPLUS_SOURCE_DIR;
}

// ---------------------------------------------------------------- 1

Outcome experiment_tables() {
  const auto start = Clock::now();
  RunConfig cfg = load_run_config(source_dir() / "configs" / "experiment.conf");
  cfg.output_dir = scratch("experiment");
  std::ostringstream log;
  const ExperimentResult r = cmd_experiment(cfg, log);
  const double elapsed = seconds_since(start);

  std::size_t failed_cells = 0;
  for (const ExperimentCell& c : r.cells) failed_cells += c.error.empty() ? 0 : 1;
  std::vector<std::string> datasets;
  for (const auto& p : cfg.experiment_presets) datasets.push_back(preset_title(p));

  std::string problem;
  auto table = [&](const std::string& name) -> std::string {
    for (const auto& [k, v] : r.tables) {
      if (k == name) return v;
    }
    return {};
  };
  const std::string t2 = table("table2");
  const std::string t3 = table("table3");
  if (t2.empty() || t3.empty()) {
    problem = "table 2 or 3 missing";
  } else if (auto e = check_grid(t2, datasets, {"Loss", "AUC"},
                                 {"Star   -", "Star+  Add", "Star+  Concat", "Star+  Gate",
                                  "Star+  Adaptive Add"});
             !e.empty()) {
    problem = "fusion table: " + e;
  } else if (auto e3 = check_grid(t3, datasets, {"Star", "Star+"},
                                  {"No Normalization", "LayerNorm", "BatchNorm", "PartitionNorm"});
             !e3.empty()) {
    problem = "normalization table: " + e3;
  }
  const bool ok = problem.empty() && failed_cells == 0 && elapsed < 600.0;
  return {ok, fmt::format("{} cells, {} failed, fusion 5x{} and normalization 4x{} grids{}, {:.1f} s "
                          "(limit 600 s)",
                          r.cells.size(), failed_cells, 2 * datasets.size(), 2 * datasets.size(),
                          problem.empty() ? "" : " [" + problem + "]", elapsed)};
}

// ---------------------------------------------------------------- 2

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  std::ostringstream log;
  GradcheckOptions o;
  o.batch_size = 8;
  o.tolerance = 1e-4;
  const auto cases = cmd_gradcheck(o, log);
  const double elapsed = seconds_since(start);
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& c : cases) {
    failed += c.report.passed ? 0 : 1;
    worst = std::max(worst, c.report.max_rel_error);
  }
  const bool ok = failed == 0 && cases.size() == 20 && worst <= 1e-4 && elapsed < 60.0;
  return {ok, fmt::format("{} combinations, {} failed, max rel. error {:.2e}, {:.2f} s", cases.size(),
                          failed, worst, elapsed)};
}

// ---------------------------------------------------------------- 3

struct Combination {
  Architecture architecture;
  FusionType fusion;
  NormKind norm;
};

std::vector<Combination> all_combinations() {
  std::vector<Combination> out;
  for (NormKind n : {NormKind::none, NormKind::batch, NormKind::layer, NormKind::partition}) {
    out.push_back({Architecture::star, FusionType::builtin, n});
    for (FusionType f : {FusionType::add, FusionType::adaptive_add, FusionType::gate,
                         FusionType::concat}) {
      out.push_back({Architecture::star_plus, f, n});
    }
  }
  return out;
}

bool rows_zero_except(const Matrix& g, std::size_t keep) {
  for (std::size_t r = 0; r < g.rows(); ++r) {
    if (r == keep) continue;
    for (double v : g.row(r)) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

Outcome domain_isolation() {
  std::size_t checks = 0;
  std::vector<std::string> violations;
  for (std::size_t m : {3u, 6u}) {
    for (const Combination& c : all_combinations()) {
      for (std::uint32_t d = 0; d < m; ++d) {
        MultiDomainModel model(gradcheck_model_config(c.architecture, c.fusion, c.norm, m, 17));
        jitter_params(model, 0.1, 17 + d);
        model.set_mode(NormMode::training);
        Batch batch = gradcheck_batch(model.config(), 8, 5 + d);
        for (auto& dom : batch.domains) dom = d;
        model.store().zero_grads();
        const Matrix logits = model.forward(batch);
        model.backward(bce_loss(logits, batch.label_matrix()).grad);

        bool ok = true;
        bool own_nonzero = false;
        for (std::size_t e = 0; e < m; ++e) {
          for (const DenseLayer& l : model.domain_tower(e).layers()) {
            for (const Matrix* g : {&l.weight().grad, &l.bias().grad}) {
              const bool zero = std::all_of(g->data().begin(), g->data().end(),
                                            [](double v) { return v == 0.0; });
              if (e == d) {
                own_nonzero = own_nonzero || !zero;
              } else {
                ok = ok && zero;
              }
            }
          }
        }
        NormLayer& norm = model.norm();
        if (norm.gamma_p() != nullptr) {
          ok = ok && rows_zero_except(norm.gamma_p()->grad, d) &&
               rows_zero_except(norm.beta_p()->grad, d);
        }
        if (Param* w = model.fusion().domain_weights()) ok = ok && rows_zero_except(w->grad, d);
        ok = ok && rows_zero_except(model.domain_embedding().table().grad, d);
        ++checks;
        if (!ok || !own_nonzero) {
          violations.push_back(fmt::format("M={} {}/{}/{} d={}{}", m, to_string(c.architecture),
                                           to_string(c.fusion), to_string(c.norm), d,
                                           own_nonzero ? "" : " (own tower got no gradient)"));
        }
      }
    }
  }
  std::string detail = fmt::format("{} (M, combination, domain) cases, {} violations", checks,
                                   violations.size());
  if (!violations.empty()) detail += "; first: " + violations.front();
  return {violations.empty(), detail};
}

// ---------------------------------------------------------------- 4

Outcome star_identity() {
  std::size_t rows = 0;
  std::size_t mismatches = 0;
  for (NormKind n : {NormKind::none, NormKind::layer}) {
    MultiDomainModel model(gradcheck_model_config(Architecture::star, FusionType::builtin, n, 3, 23));
    jitter_params(model, 0.3, 23);
    for (DenseLayer& l : model.shared_tower().layers()) {
      l.weight().value.fill(1.0);
      l.bias().value.fill(0.0);
    }
    const Batch batch = gradcheck_batch(model.config(), 16, 23);
    const Matrix z = model.norm().forward(model.assemble_input(batch), batch.domains);
    const Matrix star = model.star_combined_forward(z, batch.domains);
    for (std::uint32_t d = 0; d < 3; ++d) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.domains[i] == d) idx.push_back(i);
      }
      const Matrix vanilla = model.domain_tower(d).forward(gather_rows(z, idx));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        ++rows;
        const double a = vanilla(k, 0);
        const double b = star(idx[k], 0);
        if (std::memcmp(&a, &b, sizeof(double)) != 0) ++mismatches;
      }
    }
  }
  return {mismatches == 0 && rows > 0,
          fmt::format("{} rows over 3 domains and 2 norms, {} not bit-identical", rows, mismatches)};
}

// ---------------------------------------------------------------- 5

double simplex_gap(Fusion& fusion, std::size_t domains) {
  double worst = 0.0;
  for (std::uint32_t d = 0; d < domains; ++d) {
    const auto c = fusion.domain_constants(d);
    worst = std::max(worst, std::fabs(c[0] + c[1] + c[2] - 1.0));
  }
  return worst;
}

Outcome adaptive_simplex() {
  SyntheticSpec spec = preset("company2", 5);
  spec.vocab_sizes = {50, 20, 10};
  spec.calibration_samples = 5000;
  const Dataset data = SyntheticGenerator(spec).generate(20000);
  ModelConfig base;
  base.architecture = Architecture::star_plus;
  base.fusion.type = FusionType::adaptive_add;
  base.tower_widths = {16, 8};
  base.tower_output_dim = 4;
  base.seed = 5;
  MultiDomainModel model(model_config_for(data, base, 4));
  const double at_init = simplex_gap(model.fusion(), data.num_domains());

  AdamConfig adam;
  adam.learning_rate = 0.01;
  BatchPlan plan;
  plan.batch_size = 64;
  plan.seed = 5;
  std::vector<Param*> params = model.store().params();
  model.set_mode(NormMode::training);
  std::size_t steps = 0;
  for (std::uint64_t epoch = 0; steps < 1000; ++epoch) {
    for (const auto& rows : plan_batches(data, plan, epoch).batches) {
      if (steps == 1000) break;
      const Batch b = data.make_batch(rows);
      model.store().zero_grads();
      model.backward(bce_loss(model.forward(b), b.label_matrix()).grad);
      adam_step(params, adam);
      ++steps;
    }
  }
  const double after = simplex_gap(model.fusion(), data.num_domains());
  double spread = 0.0;
  for (std::uint32_t d = 0; d < data.num_domains(); ++d) {
    spread = std::max(spread, std::fabs(model.fusion().domain_constants(d)[0] - 0.5));
  }
  const bool ok = at_init <= 1e-15 && after <= 1e-15 && steps == 1000;
  return {ok, fmt::format("{} domains, max |sum - 1| {:.1e} at init and {:.1e} after {} steps "
                          "(c_d moved up to {:.3f} from 0.5)",
                          data.num_domains(), at_init, after, steps, spread)};
}

// ---------------------------------------------------------------- 6

Outcome auc_oracle() {
  std::mt19937_64 rng(6);
  std::size_t mismatches = 0;
  std::size_t undefined = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 500;
    const std::uint64_t levels = 1 + rng() % (trial % 2 == 0 ? 10 : 1000);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / static_cast<double>(levels);
      y[i] = static_cast<std::uint8_t>(rng() % 2);
    }
    const double ref = oracle::pairwise_auc(s, y);
    const auto got = auc(s, y);
    if (ref < 0) {
      ++undefined;
      if (got) ++mismatches;
    } else if (!got || *got != ref) {
      ++mismatches;
    }
  }
  const double ll = logloss(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 1});
  const double ll_err = std::fabs(ll - std::log(2.0));
  return {mismatches == 0 && ll_err <= 1e-12,
          fmt::format("1000 instances (n <= 500, tied scores), {} mismatches, {} single-class; "
                      "|logloss(0.5) - ln 2| = {:.1e}",
                      mismatches, undefined, ll_err)};
}

// ---------------------------------------------------------------- 7

Outcome normalization_identities() {
  std::mt19937_64 rng(7);
  std::size_t bit_mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 3 + trial % 5;
    const std::size_t rows = 2 + trial % 9;
    const std::uint32_t domain = static_cast<std::uint32_t>(trial % 3);
    ParamStore sb, sp;
    NormConfig cb;
    cb.kind = NormKind::batch;
    cb.dim = dim;
    NormConfig cp = cb;
    cp.kind = NormKind::partition;
    cp.num_domains = 3;
    NormLayer bn = NormLayer::create(sb, "norm", cb);
    NormLayer pn = NormLayer::create(sp, "norm", cp);
    const Matrix gamma = oracle::random_matrix(1, dim, rng);
    const Matrix beta = oracle::random_matrix(1, dim, rng);
    bn.gamma()->value = pn.gamma()->value = gamma;
    bn.beta()->value = pn.beta()->value = beta;
    const Matrix x = oracle::random_matrix(rows, dim, rng, 2.0);
    const Matrix up = oracle::random_matrix(rows, dim, rng);
    const std::vector<std::uint32_t> dom(rows, domain);
    if (!(bn.forward(x, dom) == pn.forward(x, dom))) ++bit_mismatches;
    if (!(bn.backward(up) == pn.backward(up))) ++bit_mismatches;
    if (!(bn.gamma()->grad == pn.gamma()->grad)) ++bit_mismatches;
    if (!(bn.beta()->grad == pn.beta()->grad)) ++bit_mismatches;
  }

  // Layer norm with gamma = 1, beta = 0 on unit-scale rows at the default eps.
  ParamStore sl;
  NormConfig cl;
  cl.kind = NormKind::layer;
  cl.dim = 24;
  NormLayer ln = NormLayer::create(sl, "norm", cl);
  const Matrix x = oracle::random_matrix(256, 24, rng);
  const Matrix out = ln.forward(x, std::vector<std::uint32_t>(256, 0));
  double worst_mean = 0.0;
  double worst_var = 0.0;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double m = 0.0;
    for (double v : out.row(i)) m += v;
    m /= static_cast<double>(out.cols());
    double var = 0.0;
    for (double v : out.row(i)) var += (v - m) * (v - m);
    var /= static_cast<double>(out.cols());
    worst_mean = std::max(worst_mean, std::fabs(m));
    worst_var = std::max(worst_var, std::fabs(var - 1.0));
  }
  const bool ok = bit_mismatches == 0 && worst_mean < 1e-10 && worst_var <= 1e-8;
  return {ok, fmt::format("partition vs batch: 20 single-domain batches, {} bitwise mismatches; "
                          "layer norm (eps {:g}): max |row mean| {:.1e} (limit 1e-10), "
                          "max |row var - 1| {:.1e} (limit 1e-8)",
                          bit_mismatches, cl.eps, worst_mean, worst_var)};
}

// ---------------------------------------------------------------- 8

Outcome synthetic_calibration() {
  const std::vector<double> shares{93.31, 6.68, 0.01};
  const std::vector<double> ctrs{0.41, 16.28, 13.33};
  const Dataset data = SyntheticGenerator(preset("company1", 1)).generate(200000);
  const auto counts = data.domain_counts();
  const auto pos = data.domain_positives();
  double worst = 0.0;
  std::vector<std::string> parts;
  for (std::size_t d = 0; d < 3; ++d) {
    const double share = 100.0 * static_cast<double>(counts[d]) / static_cast<double>(data.size());
    const double ctr = counts[d] == 0 ? 0.0 : 100.0 * static_cast<double>(pos[d]) / counts[d];
    worst = std::max({worst, std::fabs(share - shares[d]), std::fabs(ctr - ctrs[d])});
    parts.push_back(fmt::format("#{} share {:.2f}% ctr {:.2f}% ({} rows)", d + 1, share, ctr, counts[d]));
  }
  return {worst <= 0.5, fmt::format("n = 200000, seed 1: {}; max deviation {:.2f} pp (limit 0.5)",
                                    fmt::join(parts, ", "), worst)};
}

// ---------------------------------------------------------------- 9

Outcome learning_sanity() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.name = "three-domain";
  spec.domain_shares = {0.5, 0.3, 0.2};
  spec.target_ctrs = {0.05, 0.15, 0.10};
  spec.domain_mix = 0.7;
  spec.effect_scale = 1.5;
  spec.seed = 1;
  const SyntheticGenerator gen(spec);
  const Dataset train_data = gen.generate(30000, 0);
  const Dataset valid_data = gen.generate(10000, 1);
  const Dataset test_data = gen.generate(10000, 2);

  ModelConfig base;
  base.architecture = Architecture::star_plus;
  base.norm = NormKind::layer;
  base.tower_widths = {64, 32};
  base.tower_output_dim = 16;
  base.seed = 1;
  TrainOptions opts;
  opts.adam.learning_rate = 0.001;
  opts.batch.batch_size = 256;
  opts.batch.seed = 1;
  opts.epochs = 5;

  ModelConfig star_plus = base;
  star_plus.fusion.type = FusionType::adaptive_add;
  // Shared-only baseline: the same graph with only the shared head weighted.
  ModelConfig shared = base;
  shared.fusion.type = FusionType::add;
  shared.fusion.c_d = 0.0;
  shared.fusion.c_s = 1.0;
  shared.fusion.c_a = 0.0;

  auto fit = [&](const ModelConfig& c) {
    MultiDomainModel m(model_config_for(train_data, c, 8));
    (void)train(m, train_data, &valid_data, opts);
    return *evaluate(m, test_data).overall.auc;
  };
  const double auc_plus = fit(star_plus);
  const double auc_shared = fit(shared);
  const double elapsed = seconds_since(start);
  const bool ok = auc_plus >= auc_shared && auc_plus >= 0.55 && elapsed < 300.0;
  return {ok, fmt::format("test AUC Star+ (adaptive add, layer norm) {:.5f} vs shared-only {:.5f}, "
                          "{:.1f} s (limit 300 s)",
                          auc_plus, auc_shared, elapsed)};
}

// ---------------------------------------------------------------- 10

Outcome determinism() {
  RunConfig cfg = load_run_config(source_dir() / "configs" / "train.conf");
  const auto dir = scratch("determinism");
  std::ostringstream log;
  cfg.output_dir = dir / "a";
  const TrainOutcome a = cmd_train(cfg, log);
  cfg.output_dir = dir / "b";
  const TrainOutcome b = cmd_train(cfg, log);
  const std::string ca = slurp(a.checkpoint), cb = slurp(b.checkpoint);
  const std::string ma = slurp(a.metric_log), mb = slurp(b.metric_log);
  const bool ok = !ca.empty() && !ma.empty() && ca == cb && ma == mb;
  return {ok, fmt::format("checkpoints {} ({} bytes), metric logs {} ({} bytes), {} epochs",
                          ca == cb ? "identical" : "differ", ca.size(),
                          ma == mb ? "identical" : "differ", ma.size(), a.result.epochs_run)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "experiment table shapes", experiment_tables},
      {2, "gradient fidelity", gradient_fidelity},
      {3, "domain isolation", domain_isolation},
      {4, "star identity", star_identity},
      {5, "adaptive-add simplex", adaptive_simplex},
      {6, "auc oracle equivalence", auc_oracle},
      {7, "normalization identities", normalization_identities},
      {8, "synthetic calibration", synthetic_calibration},
      {9, "learning sanity", learning_sanity},
      {10, "determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const Error& e) {
      o = {false, fmt::format("error[{}]: {}", error_tag(e.code()), e.what())};
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failures += o.passed ? 0 : 1;
    std::cout << fmt::format("{} [{:>2}] {}: {}", o.passed ? "PASS" : "FAIL", c.id, c.name, o.detail)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
