// SPDX-License-Identifier: Apache-2.0
//
// starplus: generate synthetic data, train, evaluate, run experiment grids and
// check gradients. Exit status: 0 ok, 1 invalid input or config, 2 runtime
// failure, 3 numeric failure.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "starplus/commands.hpp"
#include "starplus/error.hpp"

namespace {

using namespace starplus;

/// Config file, per-key flags and --set overrides for one subcommand.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "run config file (key = value)");
    cmd->add_option("--set", sets, "override, key=value (repeatable, applied last)");
    for (const ConfigKey& key : config_keys()) {
      cmd->add_option("--" + flag_name(key.name), values[key.name], key.help)
          ->group("Config keys");
    }
  }

  RunConfig resolve(CLI::App* cmd) const {
    RunConfig cfg = file.empty() ? RunConfig{} : load_run_config(file);
    for (const ConfigKey& key : config_keys()) {
      if (cmd->get_option("--" + flag_name(key.name))->count() > 0) {
        cfg.set(key.name, values.at(key.name));
      }
    }
    for (const std::string& s : sets) apply_override(cfg, s);
    return cfg;
  }
};

std::string one_line(std::string text) {
  for (char& ch : text) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return text;
}

int fail(std::string_view tag, const std::string& message, int code) {
  std::cerr << "error[" << tag << "]: " << one_line(message) << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Star / Star+ multi-domain CTR models"};
  app.require_subcommand(1);

  ConfigFlags gen_flags;
  std::size_t gen_examples = 200000;
  std::uint64_t gen_stream = 0;
  std::string gen_name;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset (csv, schema, cache)");
  gen->add_option("-n,--examples", gen_examples, "number of examples")->capture_default_str();
  gen->add_option("--stream", gen_stream, "sampling stream of the same synthetic world")
      ->capture_default_str();
  gen->add_option("--name", gen_name, "output file stem (default: the preset name)");
  gen_flags.attach(gen);

  ConfigFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_flags.attach(train_cmd);

  std::string eval_checkpoint;
  std::string eval_data;
  std::string eval_schema;
  std::string eval_split = "eval";
  std::string eval_out;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset cache or CSV file")->required();
  eval->add_option("--schema", eval_schema, "schema file for CSV data");
  eval->add_option("--split", eval_split, "split label used in the report")->capture_default_str();
  eval->add_option("--out", eval_out, "directory for eval_<split>.csv/.txt");

  ConfigFlags exp_flags;
  CLI::App* experiment =
      app.add_subcommand("experiment", "train a grid of models and print comparison tables");
  exp_flags.attach(experiment);

  GradcheckOptions gc;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of every model combination");
  gradcheck->add_option("--architecture", gc.architecture, "all|star|star_plus")
      ->capture_default_str();
  gradcheck->add_option("--fusion", gc.fusion, "all|builtin|add|adaptive_add|gate|concat")
      ->capture_default_str();
  gradcheck->add_option("--norm", gc.norm, "all|none|batch|layer|partition")->capture_default_str();
  gradcheck->add_option("--batch-size", gc.batch_size, "examples per check (1..16)")
      ->capture_default_str();
  gradcheck->add_option("--domains", gc.num_domains, "number of domains")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed, "seed")->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance, "max relative error")->capture_default_str();
  gradcheck->add_flag("--inject-bug", gc.inject_bug, "corrupt one backward pass on purpose");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("E_USAGE", e.what(), 1);
  }

  try {
    if (gen->parsed()) {
      cmd_gen(gen_flags.resolve(gen), gen_examples, gen_stream, gen_name, std::cout);
    } else if (train_cmd->parsed()) {
      cmd_train(train_flags.resolve(train_cmd), std::cout);
    } else if (eval->parsed()) {
      std::filesystem::path out = eval_out;
      if (!out.empty() && out.is_relative()) {
        RunConfig tmp;
        tmp.output_dir = out;
        out = tmp.resolved_output_dir();
      }
      cmd_eval(eval_checkpoint, eval_data, eval_schema, eval_split, out, std::cout);
    } else if (experiment->parsed()) {
      cmd_experiment(exp_flags.resolve(experiment), std::cout);
    } else if (gradcheck->parsed()) {
      const auto cases = cmd_gradcheck(gc, std::cout);
      std::size_t failed = 0;
      for (const auto& c : cases) failed += c.report.passed ? 0 : 1;
      if (failed > 0) {
        return fail("E_GRADCHECK",
                    std::to_string(failed) + " of " + std::to_string(cases.size()) +
                        " gradient checks failed",
                    3);
      }
    }
  } catch (const Error& e) {
    return fail(error_tag(e.code()), e.what(), exit_code_for(e.code()));
  } catch (const std::exception& e) {
    return fail("E_INTERNAL", e.what(), 2);
  }
  return 0;
}
