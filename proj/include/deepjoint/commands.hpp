// SPDX-License-Identifier: Apache-2.0
#pragma once

// The six command-line operations as library calls. Each writes its
// artifacts and an atomic manifest.json into the output directory and
// returns the manifest.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepjoint/experiments.hpp"

namespace deepjoint {

struct CommandOptions {
  std::string config;  // YAML path; empty uses defaults
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> strategies;
  std::optional<std::vector<double>> horizons;
  std::optional<std::size_t> bootstrap;
  std::string cohort;
  std::string checkpoint;
  std::string split;  // split.json from a train run; its test ids select patients
  std::optional<double> radius;
  std::optional<std::string> kind;
  std::optional<std::size_t> copies;
  std::ostream* log = nullptr;  // human-readable progress; null silences it
};

inline nlohmann::json to_json(const SearchSpace& s) {
  return {{"lr", s.lr},         {"batch_size", s.batch_size}, {"alpha", s.alpha}, {"rnn_layers", s.rnn_layers},
          {"hidden_dim", s.hidden_dim}, {"head_layers", s.head_layers}, {"nodes", s.nodes}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json strategies = nlohmann::json::array();
  for (auto s : c.transfer_strategies) strategies.push_back(to_string(s));
  return {{"seed", c.seed},
          {"generator", to_json(c.generator)},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"evaluation",
           {{"horizons", c.evaluation.horizons},
            {"bootstrap", c.evaluation.bootstrap},
            {"test_fraction", c.evaluation.test_fraction}}},
          {"search", {{"draws", c.search_draws}, {"space", to_json(c.search)}}},
          {"transfer", {{"strategies", strategies}}},
          {"perturb",
           {{"kind", to_string(c.perturb.kind)}, {"radius", c.perturb.radius}, {"copies", c.perturb.copies}}}};
}

namespace command_detail {

inline ExperimentConfig resolve_config(const CommandOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
    c.generator.seed = *o.seed;
  }
  if (o.horizons) c.evaluation.horizons = *o.horizons;
  if (o.bootstrap) c.evaluation.bootstrap = *o.bootstrap;
  if (o.radius) c.perturb.radius = *o.radius;
  if (o.kind) c.perturb.kind = parse_perturb_kind(*o.kind);
  if (o.copies) c.perturb.copies = *o.copies;
  return c;
}

inline std::string output_path(const CommandOptions& o, const std::string& name) {
  std::filesystem::create_directories(o.out);
  return (std::filesystem::path(o.out) / name).string();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move '" + tmp + "' to '" + path + "'");
}

inline void require(const std::string& value, const std::string& flag, const std::string& command) {
  if (value.empty()) throw ConfigError(command + ": " + flag + " is required");
}

inline Strategy single_strategy(const CommandOptions& o, const std::string& command) {
  if (o.strategies.size() != 1) throw ConfigError(command + ": exactly one --strategy is required");
  return parse_strategy(o.strategies.front());
}

inline std::vector<std::size_t> all_members(const Cohort& c) {
  std::vector<std::size_t> m(c.size());
  std::iota(m.begin(), m.end(), 0);
  return m;
}

/// Test members named by a split.json, or the whole cohort without one.
inline std::vector<std::size_t> test_members(const Cohort& cohort, const std::string& split_path) {
  if (split_path.empty()) return all_members(cohort);
  const auto j = read_json_file(split_path);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cohort.size(); ++i) index.emplace(cohort[i].patient_id, i);
  std::vector<std::size_t> out;
  try {
    for (const auto& id : j.at("test").get<std::vector<std::string>>()) {
      auto it = index.find(id);
      if (it == index.end()) throw DataError("split: patient '" + id + "' is not in the cohort");
      out.push_back(it->second);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split: malformed document (") + e.what() + ")");
  }
  if (out.empty()) throw DataError("split: empty test set");
  std::sort(out.begin(), out.end());
  return out;
}

inline void check_labs(const JointModel& model, const Cohort& cohort) {
  if (model.config().labs != cohort.front().labs())
    throw DataError("checkpoint expects " + std::to_string(model.config().labs) + " labs, cohort has " +
                    std::to_string(cohort.front().labs()));
}

inline nlohmann::json finish(const CommandOptions& o, nlohmann::json manifest, const Stopwatch& clock) {
  manifest["timings"]["total_seconds"] = clock.seconds();
  write_json_file(output_path(o, "manifest.json"), manifest);
  return manifest;
}

}  // namespace command_detail

/// Writes cohort.jsonl and truth.jsonl.
inline nlohmann::json cmd_generate(const CommandOptions& o) {
  using namespace command_detail;
  Stopwatch clock;
  const auto cfg = resolve_config(o);
  cfg.generator.validate();
  const auto synth = generate(cfg.generator);
  std::ostringstream cohort_text, truth_text;
  write_cohort(cohort_text, synth.cohort);
  write_truth(truth_text, synth.truth);
  const auto cohort_path = output_path(o, "cohort.jsonl");
  const auto truth_path = output_path(o, "truth.jsonl");
  write_text_file(cohort_path, cohort_text.str());
  write_text_file(truth_path, truth_text.str());

  auto manifest = make_manifest("generate", cfg.seed, to_json(cfg), nlohmann::json::object());
  manifest["seed_labels"] = {"synth/latent", "synth/observation/<regime>", "synth/masks/<regime>", "synth/noise",
                             "synth/survival", "synth/censoring"};
  manifest["results"]["files"] = {{"cohort.jsonl", file_digest(cohort_path)}, {"truth.jsonl", file_digest(truth_path)}};
  for (const char* r : {"A", "B"}) {
    const auto s = summarize(synth.cohort, r);
    manifest["results"]["summary"][r] = {{"patients", s.patients},
                                         {"mean_encounters", s.mean_encounters},
                                         {"mean_gap_hours", s.mean_gap},
                                         {"observed_share", s.observed_share},
                                         {"event_share", s.event_share}};
  }
  if (o.log) {
    for (const auto& [name, digest] : manifest["results"]["files"].items())
      *o.log << name << "  " << digest.get<std::string>() << '\n';
    for (const auto& [r, s] : manifest["results"]["summary"].items())
      *o.log << "regime " << r << ": " << s["patients"] << " patients, " << s["mean_encounters"]
             << " encounters, mean gap " << s["mean_gap_hours"] << " h\n";
  }
  return finish(o, std::move(manifest), clock);
}

/// Trains one strategy on the non-test share; writes checkpoint.json,
/// history.jsonl and split.json.
inline nlohmann::json cmd_train(const CommandOptions& o) {
  using namespace command_detail;
  Stopwatch clock;
  require(o.cohort, "--cohort", "train");
  const auto cfg = resolve_config(o);
  const Strategy strategy = single_strategy(o, "train");
  const Cohort cohort = read_cohort(o.cohort);
  const auto split = split_random(cohort.size(), cfg.evaluation.test_fraction, 0.0, derive_seed(cfg.seed, "split"));

  std::ostringstream history;
  auto fit = fit_strategy(cohort, split.train, strategy, cfg.model, cfg.train, [&](const EpochRecord& r) {
    history << to_json(r).dump() << '\n';
    if (o.log && r.improved) *o.log << r.phase << " epoch " << r.epoch << " val " << r.val_loss << '\n';
  });

  const auto history_path = output_path(o, "history.jsonl");
  const auto checkpoint_path = output_path(o, "checkpoint.json");
  const auto split_path = output_path(o, "split.json");
  write_text_file(history_path, history.str());
  save_checkpoint(checkpoint_path, fit.model, cfg.train);
  const auto test_ids = member_ids(cohort, split.test);
  write_json_file(split_path, {{"format_version", 1},
                               {"seed_label", "split"},
                               {"test_fraction", cfg.evaluation.test_fraction},
                               {"train", member_ids(cohort, split.train)},
                               {"test", test_ids},
                               {"test_set", ids_digest(test_ids)}});

  auto manifest = make_manifest("train", cfg.seed, to_json(cfg), {{"cohort", file_digest(o.cohort)}});
  manifest["strategy"] = to_string(strategy);
  manifest["seed_labels"] = {"split", "split/validation", "model", "init/<component>", "train/joint/shuffle",
                             "train/finetune/<task>"};
  manifest["results"] = {{"epochs", fit.result.history.size()},
                         {"best_joint_epoch", fit.result.best_joint_epoch},
                         {"best_joint_val", fit.result.best_joint_val},
                         {"files",
                          {{"checkpoint.json", file_digest(checkpoint_path)},
                           {"history.jsonl", file_digest(history_path)},
                           {"split.json", file_digest(split_path)}}}};
  return finish(o, std::move(manifest), clock);
}

/// Scores a checkpoint on the split's test patients; writes report.json.
inline nlohmann::json cmd_evaluate(const CommandOptions& o) {
  using namespace command_detail;
  Stopwatch clock;
  require(o.cohort, "--cohort", "evaluate");
  require(o.checkpoint, "--checkpoint", "evaluate");
  const auto cfg = resolve_config(o);
  const Cohort cohort = read_cohort(o.cohort);
  auto loaded = load_checkpoint(o.checkpoint);
  check_labs(loaded.model, cohort);
  const auto members = test_members(cohort, o.split);
  const auto report = evaluate_predictions(predict(loaded.model, cohort, members), cfg.evaluation, cfg.seed);
  write_json_file(output_path(o, "report.json"), to_json(report));

  nlohmann::json inputs = {{"cohort", file_digest(o.cohort)}, {"checkpoint", file_digest(o.checkpoint)}};
  if (!o.split.empty()) inputs["split"] = file_digest(o.split);
  auto manifest = make_manifest("evaluate", cfg.seed, to_json(cfg), std::move(inputs));
  manifest["strategy"] = to_string(loaded.model.config().strategy);
  manifest["seed_labels"] = {"bootstrap"};
  manifest["results"]["report"] = to_json(report);
  if (o.log) {
    for (std::size_t k = 0; k < report.horizons.size(); ++k)
      *o.log << "C-index@" << report.horizons[k] << "d " << report.cindex[k].point << " (" << report.cindex[k].std
             << ")  Brier " << report.brier[k].point << " (" << report.brier[k].std << ")\n";
    *o.log << "integrated C-index " << report.integrated_cindex.point << " (" << report.integrated_cindex.std << ")\n";
  }
  return finish(o, std::move(manifest), clock);
}

/// Cross-regime transfer table; writes transfer.json and transfer.txt.
inline nlohmann::json cmd_transfer(const CommandOptions& o) {
  using namespace command_detail;
  Stopwatch clock;
  require(o.cohort, "--cohort", "transfer");
  const auto cfg = resolve_config(o);
  std::vector<Strategy> strategies;
  for (const auto& s : o.strategies) strategies.push_back(parse_strategy(s));
  if (strategies.empty()) strategies = cfg.transfer_strategies;
  const Cohort cohort = read_cohort(o.cohort);
  const auto table = run_transfer(cohort, strategies, cfg.model, cfg.train, cfg.evaluation, cfg.seed);
  const auto text = format_transfer_table(table);
  write_json_file(output_path(o, "transfer.json"), to_json(table));
  write_text_file(output_path(o, "transfer.txt"), text);

  auto manifest = make_manifest("transfer", cfg.seed, to_json(cfg), {{"cohort", file_digest(o.cohort)}});
  manifest["seed_labels"] = {"transfer/split", "transfer/train", "transfer/evaluate", "split/regime/<regime>",
                             "split/regime/subsample"};
  manifest["results"]["transfer"] = to_json(table);
  if (o.log) *o.log << text;
  return finish(o, std::move(manifest), clock);
}

/// Loss sensitivity to observation-process perturbations; writes perturb.json.
inline nlohmann::json cmd_perturb(const CommandOptions& o) {
  using namespace command_detail;
  Stopwatch clock;
  require(o.cohort, "--cohort", "perturb");
  require(o.checkpoint, "--checkpoint", "perturb");
  const auto cfg = resolve_config(o);
  const Cohort cohort = read_cohort(o.cohort);
  auto loaded = load_checkpoint(o.checkpoint);
  check_labs(loaded.model, cohort);
  const auto members = test_members(cohort, o.split);
  const auto report = run_perturb(loaded.model, cohort, members, cfg.perturb, loaded.train.alpha, cfg.seed);
  write_json_file(output_path(o, "perturb.json"), to_json(report));

  nlohmann::json inputs = {{"cohort", file_digest(o.cohort)}, {"checkpoint", file_digest(o.checkpoint)}};
  if (!o.split.empty()) inputs["split"] = file_digest(o.split);
  auto manifest = make_manifest("perturb", cfg.seed, to_json(cfg), std::move(inputs));
  manifest["strategy"] = to_string(loaded.model.config().strategy);
  manifest["seed_labels"] = {"perturb/<patient_id>"};
  manifest["results"]["perturb"] = to_json(report);
  if (o.log)
    *o.log << "mean |delta loss|: survival " << report.delta.survival << ", intensity " << report.delta.intensity
           << ", missingness " << report.delta.missingness << ", combined " << report.delta.combined << '\n';
  return finish(o, std::move(manifest), clock);
}

/// Random hyperparameter search scored by validation integrated C-index;
/// writes leaderboard.json.
inline nlohmann::json cmd_search(const CommandOptions& o) {
  using namespace command_detail;
  Stopwatch clock;
  require(o.cohort, "--cohort", "search");
  const auto cfg = resolve_config(o);
  const Strategy strategy = single_strategy(o, "search");
  const Cohort cohort = read_cohort(o.cohort);
  const auto split = split_random(cohort.size(), cfg.evaluation.test_fraction, 0.0, derive_seed(cfg.seed, "split"));
  const double max_horizon = *std::max_element(cfg.evaluation.horizons.begin(), cfg.evaluation.horizons.end());

  auto score = [&](const Candidate& c, std::uint64_t) {
    auto fit = fit_strategy(cohort, split.train, strategy, c.model, c.train);
    const auto p = predict(fit.model, cohort, fit.val);
    const double s = cindex_integrated(p.curves(), p.labels, max_horizon);
    if (o.log) *o.log << "draw score " << s << '\n';
    return s;
  };
  const auto result = random_search(cfg.search, {cfg.model, cfg.train}, cfg.search_draws, cfg.seed, score);

  nlohmann::json board = nlohmann::json::array();
  for (const auto& e : result.leaderboard)
    board.push_back({{"draw", e.draw},
                     {"score", e.score},
                     {"model", to_json(e.candidate.model)},
                     {"train", to_json(e.candidate.train)}});
  const nlohmann::json best = {{"model", to_json(result.best.model)}, {"train", to_json(result.best.train)}};
  write_json_file(output_path(o, "leaderboard.json"), {{"leaderboard", board}, {"best", best}});

  auto manifest = make_manifest("search", cfg.seed, to_json(cfg), {{"cohort", file_digest(o.cohort)}});
  manifest["strategy"] = to_string(strategy);
  manifest["seed_labels"] = {"split", "search/sample", "search/draw"};
  manifest["results"] = {{"leaderboard", board}, {"best", best}};
  return finish(o, std::move(manifest), clock);
}

}  // namespace deepjoint
