// SPDX-License-Identifier: Apache-2.0
// deepjoint: command-line front end. Exit codes: 0 success, 2 config error,
// 3 data error, 4 numerical failure, 1 anything else.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "deepjoint/commands.hpp"

namespace {

std::vector<double> parse_horizons(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw deepjoint::ConfigError("--horizons: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw deepjoint::ConfigError("--horizons: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace deepjoint;
  CLI::App app{"DeepJoint survival toolkit"};
  app.require_subcommand(1);

  CommandOptions opts;
  opts.log = &std::cerr;
  std::uint64_t seed = 0;
  std::string horizons;
  std::size_t bootstrap = 100;
  double radius = 0.0;
  std::string kind;
  std::size_t copies = 0;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "YAML experiment config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed (overrides the config)");
    cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
  };
  auto needs_cohort = [&](CLI::App* cmd) {
    cmd->add_option("--cohort", opts.cohort, "cohort JSONL file")->required()->check(CLI::ExistingFile);
  };
  auto evaluation = [&](CLI::App* cmd) {
    cmd->add_option("--horizons", horizons, "comma-separated horizons in days");
    cmd->add_option("--bootstrap", bootstrap, "bootstrap iterations")->capture_default_str();
  };
  auto needs_checkpoint = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", opts.checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--split", opts.split, "split.json whose test ids select patients")->check(CLI::ExistingFile);
  };

  auto* generate = app.add_subcommand("generate", "generate a synthetic cohort");
  common(generate);
  auto* train = app.add_subcommand("train", "train one strategy");
  common(train);
  needs_cohort(train);
  train->add_option("--strategy", opts.strategies, "strategy tag")->required();
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  common(evaluate);
  needs_cohort(evaluate);
  needs_checkpoint(evaluate);
  evaluation(evaluate);
  auto* transfer = app.add_subcommand("transfer", "cross-regime transfer experiment");
  common(transfer);
  needs_cohort(transfer);
  evaluation(transfer);
  transfer->add_option("--strategy", opts.strategies, "strategy tags (default: config list)")->delimiter(',');
  auto* perturb = app.add_subcommand("perturb", "observation-process perturbation probe");
  common(perturb);
  needs_cohort(perturb);
  needs_checkpoint(perturb);
  perturb->add_option("--radius", radius, "perturbation radius r");
  perturb->add_option("--kind", kind, "gap_jitter or mask_dropout");
  perturb->add_option("--copies", copies, "perturbed copies per sequence");
  auto* search = app.add_subcommand("search", "random hyperparameter search");
  common(search);
  needs_cohort(search);
  search->add_option("--strategy", opts.strategies, "strategy tag")->required();
  evaluation(search);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto given = [](CLI::App* cmd, const char* flag) {
    auto* opt = cmd->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (given(cmd, "--seed")) opts.seed = seed;
    if (given(cmd, "--horizons")) opts.horizons = parse_horizons(horizons);
    if (given(cmd, "--bootstrap")) opts.bootstrap = bootstrap;
    if (given(cmd, "--radius")) opts.radius = radius;
    if (given(cmd, "--kind")) opts.kind = kind;
    if (given(cmd, "--copies")) opts.copies = copies;

    const std::string name = cmd->get_name();
    if (name == "generate") cmd_generate(opts);
    else if (name == "train") cmd_train(opts);
    else if (name == "evaluate") cmd_evaluate(opts);
    else if (name == "transfer") cmd_transfer(opts);
    else if (name == "perturb") cmd_perturb(opts);
    else cmd_search(opts);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
