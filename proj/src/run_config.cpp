// SPDX-License-Identifier: Apache-2.0

#include "starplus/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/strings.hpp"

namespace starplus {

namespace {

struct KeyHandler {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string format_double(double v) { return fmt::format("{}", v); }

std::string optional_seed(const std::optional<std::uint64_t>& s) {
  return s ? std::to_string(*s) : "";
}

std::string join_strings(const std::vector<std::string>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

const std::vector<KeyHandler>& handlers() {
  using R = RunConfig;
  using S = const std::string&;
  static const std::vector<KeyHandler> table = {
      {{"seed", "master seed for model init, batching and data (mandatory)"},
       [](R& c, S v) {
         if (v.empty()) {
           c.seed.reset();
         } else {
           c.seed = parse_u64(v, "seed");
         }
       },
       [](const R& c) { return optional_seed(c.seed); }},

      {{"data.preset", "synthetic preset: company1|company2|alicpp"},
       [](R& c, S v) {
         (void)preset(v, 0);
         c.preset = v;
       },
       [](const R& c) { return c.preset; }},
      {{"data.train_examples", "synthetic training examples"},
       [](R& c, S v) { c.train_examples = parse_size(v, "data.train_examples"); },
       [](const R& c) { return std::to_string(c.train_examples); }},
      {{"data.valid_examples", "synthetic validation examples"},
       [](R& c, S v) { c.valid_examples = parse_size(v, "data.valid_examples"); },
       [](const R& c) { return std::to_string(c.valid_examples); }},
      {{"data.test_examples", "synthetic test examples"},
       [](R& c, S v) { c.test_examples = parse_size(v, "data.test_examples"); },
       [](const R& c) { return std::to_string(c.test_examples); }},
      {{"data.domain_mix", "fraction of ground-truth effect variance that is domain specific"},
       [](R& c, S v) { c.domain_mix = parse_double(v, "data.domain_mix"); },
       [](const R& c) { return format_double(c.domain_mix); }},
      {{"data.effect_scale", "std of the feature part of the ground-truth logit"},
       [](R& c, S v) { c.effect_scale = parse_double(v, "data.effect_scale"); },
       [](const R& c) { return format_double(c.effect_scale); }},
      {{"data.feature_shift", "per-domain tilt of feature popularity"},
       [](R& c, S v) { c.feature_shift = parse_double(v, "data.feature_shift"); },
       [](const R& c) { return format_double(c.feature_shift); }},
      {{"data.vocab_sizes", "synthetic field cardinalities, comma separated"},
       [](R& c, S v) { c.vocab_sizes = parse_sizes(v); },
       [](const R& c) { return join_sizes(c.vocab_sizes); }},
      {{"data.seed", "generator seed (defaults to seed)"},
       [](R& c, S v) {
         if (v.empty()) {
           c.data_seed.reset();
         } else {
           c.data_seed = parse_u64(v, "data.seed");
         }
       },
       [](const R& c) { return optional_seed(c.data_seed); }},
      {{"data.train", "training data file (dataset cache, or CSV with data.schema)"},
       [](R& c, S v) { c.train_path = v; }, [](const R& c) { return c.train_path.string(); }},
      {{"data.valid", "validation data file"}, [](R& c, S v) { c.valid_path = v; },
       [](const R& c) { return c.valid_path.string(); }},
      {{"data.test", "test data file"}, [](R& c, S v) { c.test_path = v; },
       [](const R& c) { return c.test_path.string(); }},
      {{"data.schema", "CSV schema file"}, [](R& c, S v) { c.schema_path = v; },
       [](const R& c) { return c.schema_path.string(); }},

      {{"model.architecture", "star|star_plus"},
       [](R& c, S v) { c.model.architecture = parse_architecture(v); },
       [](const R& c) { return std::string(to_string(c.model.architecture)); }},
      {{"model.tower_widths", "hidden widths of every tower, comma separated"},
       [](R& c, S v) { c.model.tower_widths = parse_sizes(v); },
       [](const R& c) { return join_sizes(c.model.tower_widths); }},
      {{"model.tower_output_dim", "k, output width of the Star+ towers"},
       [](R& c, S v) { c.model.tower_output_dim = parse_size(v, "model.tower_output_dim"); },
       [](const R& c) { return std::to_string(c.model.tower_output_dim); }},
      {{"model.embedding_dim", "embedding width of every feature field"},
       [](R& c, S v) { c.embedding_dim = parse_size(v, "model.embedding_dim"); },
       [](const R& c) { return std::to_string(c.embedding_dim); }},
      {{"model.domain_embedding_dim", "width of the auxiliary domain-indicator embedding"},
       [](R& c, S v) {
         c.model.domain_embedding_dim = parse_size(v, "model.domain_embedding_dim");
       },
       [](const R& c) { return std::to_string(c.model.domain_embedding_dim); }},
      {{"model.norm", "none|batch|layer|partition"},
       [](R& c, S v) { c.model.norm = parse_norm_kind(v); },
       [](const R& c) { return std::string(to_string(c.model.norm)); }},
      {{"model.norm_momentum", "running-statistics EMA momentum"},
       [](R& c, S v) { c.model.norm_momentum = parse_double(v, "model.norm_momentum"); },
       [](const R& c) { return format_double(c.model.norm_momentum); }},
      {{"model.norm_eps", "normalization epsilon"},
       [](R& c, S v) { c.model.norm_eps = parse_double(v, "model.norm_eps"); },
       [](const R& c) { return format_double(c.model.norm_eps); }},
      {{"model.partition_moments", "per_domain|shared"},
       [](R& c, S v) { c.model.partition_moments = parse_partition_moments(v); },
       [](const R& c) { return std::string(to_string(c.model.partition_moments)); }},
      {{"model.fusion", "builtin (star) | add|adaptive_add|gate|concat (star_plus)"},
       [](R& c, S v) { c.model.fusion.type = parse_fusion_type(v); },
       [](const R& c) { return std::string(to_string(c.model.fusion.type)); }},
      {{"model.add_constants", "c_d,c_s,c_a for add fusion"},
       [](R& c, S v) {
         const auto vals = parse_doubles(v, "model.add_constants");
         if (vals.size() != 3) {
           throw Error(ErrorCode::config, "model.add_constants needs exactly three values");
         }
         c.model.fusion.c_d = vals[0];
         c.model.fusion.c_s = vals[1];
         c.model.fusion.c_a = vals[2];
       },
       [](const R& c) {
         return fmt::format("{},{},{}", c.model.fusion.c_d, c.model.fusion.c_s,
                            c.model.fusion.c_a);
       }},
      {{"model.gate_hidden", "hidden width of the gate network"},
       [](R& c, S v) { c.model.fusion.gate_hidden = parse_size(v, "model.gate_hidden"); },
       [](const R& c) { return std::to_string(c.model.fusion.gate_hidden); }},
      {{"model.concat_head_widths", "hidden widths of the concat head"},
       [](R& c, S v) { c.model.fusion.concat_head_widths = parse_sizes(v); },
       [](const R& c) { return join_sizes(c.model.fusion.concat_head_widths); }},

      {{"adam.learning_rate", "Adam step size"},
       [](R& c, S v) { c.adam.learning_rate = parse_double(v, "adam.learning_rate"); },
       [](const R& c) { return format_double(c.adam.learning_rate); }},
      {{"adam.beta1", "Adam first-moment decay"},
       [](R& c, S v) { c.adam.beta1 = parse_double(v, "adam.beta1"); },
       [](const R& c) { return format_double(c.adam.beta1); }},
      {{"adam.beta2", "Adam second-moment decay"},
       [](R& c, S v) { c.adam.beta2 = parse_double(v, "adam.beta2"); },
       [](const R& c) { return format_double(c.adam.beta2); }},
      {{"adam.eps", "Adam epsilon"}, [](R& c, S v) { c.adam.eps = parse_double(v, "adam.eps"); },
       [](const R& c) { return format_double(c.adam.eps); }},

      {{"batch.size", "examples per mini-batch"},
       [](R& c, S v) { c.batch.batch_size = parse_size(v, "batch.size"); },
       [](const R& c) { return std::to_string(c.batch.batch_size); }},
      {{"batch.strategy", "domain_homogeneous|mixed"},
       [](R& c, S v) { c.batch.strategy = parse_batch_strategy(v); },
       [](const R& c) { return std::string(to_string(c.batch.strategy)); }},

      {{"train.epochs", "number of epochs, or auto (stop when validation AUC stalls)"},
       [](R& c, S v) {
         if (v == "auto") {
           c.epochs.reset();
         } else {
           c.epochs = parse_size(v, "train.epochs");
         }
       },
       [](const R& c) { return c.epochs ? std::to_string(*c.epochs) : std::string("auto"); }},
      {{"train.max_epochs", "epoch cap for auto"},
       [](R& c, S v) { c.max_epochs = parse_size(v, "train.max_epochs"); },
       [](const R& c) { return std::to_string(c.max_epochs); }},
      {{"train.min_improvement", "validation AUC gain that keeps auto training going"},
       [](R& c, S v) { c.min_improvement = parse_double(v, "train.min_improvement"); },
       [](const R& c) { return format_double(c.min_improvement); }},
      {{"train.eval_every", "extra validation every N steps (0 = epoch ends only)"},
       [](R& c, S v) { c.eval_every = parse_size(v, "train.eval_every"); },
       [](const R& c) { return std::to_string(c.eval_every); }},

      {{"output.dir", "output directory (relative paths go under $STARPLUS_OUTPUT_ROOT)"},
       [](R& c, S v) { c.output_dir = v; }, [](const R& c) { return c.output_dir.string(); }},

      {{"experiment.presets", "synthetic presets forming the experiment columns"},
       [](R& c, S v) {
         std::vector<std::string> names;
         for (const auto& part : split(v, ',')) {
           const std::string name = trim(part);
           if (name.empty()) continue;
           (void)preset(name, 0);
           names.push_back(name);
         }
         if (names.empty()) throw Error(ErrorCode::config, "experiment.presets is empty");
         c.experiment_presets = std::move(names);
       },
       [](const R& c) { return join_strings(c.experiment_presets); }},
      {{"experiment.tables", "comma list of 2 (fusion), 3 (normalization), 4 (per domain), or single"},
       [](R& c, S v) {
         if (v != "single") {
           for (const auto& part : split(v, ',')) {
             const std::string t = trim(part);
             if (t != "2" && t != "3" && t != "4") {
               throw Error(ErrorCode::config,
                           fmt::format("experiment.tables: unknown table '{}'", t));
             }
           }
         }
         c.experiment_tables = v;
       },
       [](const R& c) { return c.experiment_tables; }},
  };
  return table;
}

const KeyHandler& handler_for(std::string_view key) {
  for (const KeyHandler& h : handlers()) {
    if (h.key.name == key) return h;
  }
  throw Error(ErrorCode::config, fmt::format("unknown config key '{}'", key));
}

void require_file(const std::filesystem::path& p, std::string_view key) {
  if (p.empty()) return;
  if (!std::filesystem::is_regular_file(p)) {
    throw Error(ErrorCode::config, fmt::format("{}: file '{}' does not exist", key, p.string()));
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const KeyHandler& h : handlers()) out.push_back(h.key);
    return out;
  }();
  return keys;
}

std::string flag_name(std::string_view key) {
  std::string out(key);
  for (char& ch : out) {
    if (ch == '.' || ch == '_') ch = '-';
  }
  return out;
}

std::uint64_t RunConfig::run_seed() const {
  if (!seed) throw Error(ErrorCode::config, "seed is mandatory (set 'seed' or pass --seed)");
  return *seed;
}

void RunConfig::validate() const {
  (void)run_seed();
  adam.validate();
  batch.validate();
  if (embedding_dim == 0) throw Error(ErrorCode::config, "model.embedding_dim must be >= 1");
  if (epochs && *epochs == 0) throw Error(ErrorCode::config, "train.epochs must be >= 1");
  if (max_epochs == 0) throw Error(ErrorCode::config, "train.max_epochs must be >= 1");
  if (uses_synthetic()) {
    if (train_examples < 2) throw Error(ErrorCode::config, "data.train_examples must be >= 2");
    (void)starplus::preset(preset, 0);
    synthetic_spec(preset).validate();
  } else {
    require_file(train_path, "data.train");
    require_file(valid_path, "data.valid");
    require_file(test_path, "data.test");
    require_file(schema_path, "data.schema");
    if (!epochs && valid_path.empty()) {
      throw Error(ErrorCode::config, "train.epochs = auto needs a validation file (data.valid)");
    }
  }
}

void RunConfig::set(std::string_view key, std::string_view value) {
  handler_for(key).set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return handler_for(key).get(*this); }

std::string RunConfig::to_text() const {
  std::string out = fmt::format("config_version = {}\n", kConfigVersion);
  for (const KeyHandler& h : handlers()) {
    out += fmt::format("{} = {}\n", h.key.name, h.get(*this));
  }
  return out;
}

std::filesystem::path RunConfig::resolved_output_dir() const {
  if (output_dir.is_absolute()) return output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / output_dir;
  }
  return output_dir;
}

SyntheticSpec RunConfig::synthetic_spec(std::string_view preset_name) const {
  SyntheticSpec spec = starplus::preset(preset_name, data_seed ? *data_seed : run_seed());
  spec.domain_mix = domain_mix;
  spec.effect_scale = effect_scale;
  spec.feature_shift = feature_shift;
  spec.vocab_sizes = vocab_sizes;
  return spec;
}

RunConfig parse_run_config(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  bool versioned = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::config, fmt::format("{}:{}: {}", origin, line_no, why));
    };
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!versioned) {
      if (key != "config_version") fail("first directive must be 'config_version = 1'");
      if (value != std::to_string(kConfigVersion)) {
        fail(fmt::format("unsupported config_version '{}' (this build reads {})", value,
                         kConfigVersion));
      }
      versioned = true;
      continue;
    }
    try {
      cfg.set(key, value);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (!versioned) {
    throw Error(ErrorCode::config, fmt::format("{}: missing 'config_version = 1'", origin));
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::config,
                fmt::format("override '{}' is not of the form key=value", assignment));
  }
  cfg.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

}  // namespace starplus
