// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "deepjoint/experiments.hpp"

using namespace deepjoint;

namespace {

std::string error_of(const std::string& yaml) {
  try {
    parse_config_text(yaml);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

Cohort small_cohort(std::size_t n) {
  GeneratorConfig g;
  g.n_patients = n;
  g.seed = 12;
  return generate(g).cohort;
}

FitOutput quick_fit(const Cohort& cohort, Strategy s) {
  ModelConfig m;
  m.hidden_dim = 4;
  m.survival_layers = m.intensity_layers = m.missingness_layers = {5};
  TrainConfig t;
  t.lr = 1e-2;
  t.batch_size = 64;
  t.joint_epochs = 3;
  t.max_epochs = 5;
  t.val_fraction = 0.2;
  t.seed = 4;
  std::vector<std::size_t> all(cohort.size());
  std::iota(all.begin(), all.end(), 0);
  return fit_strategy(cohort, all, s, m, t);
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = parse_config_text("");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.generator.n_patients, 4000u);
  EXPECT_EQ(c.train.alpha, 0.1);
  EXPECT_EQ(c.transfer_strategies.size(), 7u);
}

TEST(Config, SeedReachesEveryStream) {
  const auto c = parse_config_text("seed: 7\ntrain: {alpha: 0.3}\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.generator.seed, 7u);
  EXPECT_EQ(c.train.alpha, 0.3);
}

TEST(Config, SectionsParse) {
  const auto c = parse_config_text(R"(
generator: {n_patients: 300, labs: 3, kappa: 1.5}
model: {cell: gru, hidden_dim: 8, survival_layers: [20, 10], activation: softplus}
evaluation: {horizons: [5, 10], bootstrap: 30}
transfer: {strategies: [ignore, deepjoint]}
perturb: {kind: mask_dropout, radius: 0.05, copies: 2}
search: {draws: 3, lr: 0.01}
)");
  EXPECT_EQ(c.generator.n_patients, 300u);
  EXPECT_EQ(c.generator.beta.size(), 3u);
  EXPECT_EQ(c.model.cell, CellKind::gru);
  EXPECT_EQ(c.model.survival_layers, (std::vector<std::size_t>{20, 10}));
  EXPECT_EQ(c.evaluation.horizons, (std::vector<double>{5, 10}));
  EXPECT_EQ(c.transfer_strategies, (std::vector<Strategy>{Strategy::ignore, Strategy::deepjoint}));
  EXPECT_EQ(c.perturb.kind, PerturbKind::mask_dropout);
  EXPECT_EQ(c.search_draws, 3u);
  EXPECT_EQ(c.search.lr, (std::vector<double>{0.01}));
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("seed: 1\ntrain:\n  alpah: 0.2\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("seed: 1\ntrain:\n  alpah: 0.2\n").find("alpah"), std::string::npos);
  EXPECT_NE(error_of("model:\n  cell: lstm\n  hidden_dim: lots\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("transfer:\n  strategies: [ignore, nonsense]\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("model: {activation: cubic}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("bogus: 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(error_of("train: [1, 2\n").find("line"), std::string::npos);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/deepjoint.yaml"), ConfigError);
}

TEST(Checkpoint, RoundTripPreservesPredictionsBitwise) {
  const auto cohort = small_cohort(120);
  std::vector<std::size_t> all(cohort.size());
  std::iota(all.begin(), all.end(), 0);
  for (Strategy s : {Strategy::deepjoint, Strategy::gru_d, Strategy::last}) {
    auto fit = quick_fit(cohort, s);
    const auto before = predict(fit.model, cohort, all);
    const std::string text = checkpoint_json(fit.model, TrainConfig{}).dump(2);
    auto loaded = checkpoint_from_json(nlohmann::json::parse(text));
    const auto after = predict(loaded.model, cohort, all);
    EXPECT_EQ(before.eta, after.eta) << to_string(s);
    EXPECT_EQ(before.table.cumulative_baseline, after.table.cumulative_baseline) << to_string(s);
    EXPECT_EQ(loaded.model.statistics.provenance, fit.model.statistics.provenance);
    // A second trip produces the same document.
    EXPECT_EQ(checkpoint_json(loaded.model, TrainConfig{}).dump(2), text) << to_string(s);
  }
}

TEST(Checkpoint, RejectsForeignDocuments) {
  const auto cohort = small_cohort(80);
  auto fit = quick_fit(cohort, Strategy::feature);
  auto j = checkpoint_json(fit.model, TrainConfig{});
  auto wrong_version = j;
  wrong_version["format_version"] = kCheckpointFormatVersion + 1;
  EXPECT_THROW(checkpoint_from_json(wrong_version), DataError);
  auto missing = j;
  missing["parameters"].erase(missing["parameters"].begin());
  EXPECT_THROW(checkpoint_from_json(missing), DataError);
  EXPECT_THROW(checkpoint_from_json(nlohmann::json::object()), DataError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto cohort = small_cohort(80);
  auto fit = quick_fit(cohort, Strategy::count);
  const auto path = (std::filesystem::temp_directory_path() / "deepjoint_ckpt_test.json").string();
  save_checkpoint(path, fit.model, TrainConfig{});
  auto loaded = load_checkpoint(path);
  std::vector<std::size_t> all(cohort.size());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(predict(fit.model, cohort, all).eta, predict(loaded.model, cohort, all).eta);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), DataError);
}
