// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepjoint/checkpoint.hpp"
#include "deepjoint/config.hpp"
#include "deepjoint/metrics.hpp"

namespace deepjoint {

inline std::vector<std::string> member_ids(const Cohort& cohort, const std::vector<std::size_t>& members) {
  std::vector<std::string> out;
  out.reserve(members.size());
  for (auto i : members) out.push_back(cohort[i].patient_id);
  return out;
}

struct FitOutput {
  JointModel model;
  TrainResult result;
  std::vector<std::size_t> fit;  // patients the weights were trained on
  std::vector<std::size_t> val;  // early-stopping patients
};

/// Trains one strategy on a set of training patients: carves off the
/// validation share, fits statistics on the training patients only, trains
/// and refits the Breslow baseline.
inline FitOutput fit_strategy(const Cohort& cohort, const std::vector<std::size_t>& train_members, Strategy strategy,
                              ModelConfig model_cfg, TrainConfig train_cfg, const EpochCallback& on_epoch = {}) {
  if (cohort.empty()) throw DataError("fit: empty cohort");
  model_cfg.strategy = strategy;
  model_cfg.labs = cohort.front().labs();
  auto [fit, val] = hold_out(train_members, train_cfg.val_fraction, train_cfg.seed, "split/validation");
  const auto stats = fit_statistics(cohort, train_members, "train");
  const auto train_set = prepare_dataset(cohort, fit, strategy, stats);
  const auto val_set = prepare_dataset(cohort, val, strategy, stats);
  FitOutput out{JointModel(model_cfg, derive_seed(train_cfg.seed, "model")), {}, fit, val};
  out.model.statistics = stats;
  if (model_cfg.effective_cell() == CellKind::gru_d) out.model.set_gru_d_means(gru_d_means(train_set, model_cfg.labs));
  out.result = train_joint(out.model, train_set, val_set, train_cfg, on_epoch);
  return out;
}

/// Survival curves of a set of patients under a trained model.
struct Predictions {
  std::vector<double> eta;
  std::vector<SurvivalLabel> labels;
  std::vector<std::string> ids;
  BreslowTable table;

  [[nodiscard]] BreslowCurves curves() const { return {&table, eta}; }
};

inline Predictions predict(JointModel& model, const Cohort& cohort, const std::vector<std::size_t>& members) {
  const auto data = prepare_dataset(cohort, members, model.config().strategy, model.statistics);
  Predictions p;
  p.eta = predict_log_hazard(model, data);
  p.labels = data.labels();
  p.ids = data.ids();
  p.table = model.breslow;
  return p;
}

inline EvaluationReport evaluate_predictions(const Predictions& p, const EvaluationConfig& cfg, std::uint64_t seed) {
  const BreslowCurves curves = p.curves();
  EvaluationReport r = evaluate_curves(curves, p.labels, cfg.horizons, cfg.bootstrap, derive_seed(seed, "bootstrap"));
  r.test_set = ids_digest(p.ids);
  return r;
}

inline nlohmann::json to_json(const MetricSummary& m) { return {{"point", m.point}, {"mean", m.mean}, {"std", m.std}}; }

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < r.horizons.size(); ++k)
    rows.push_back({{"horizon_days", r.horizons[k]}, {"cindex", to_json(r.cindex[k])}, {"brier", to_json(r.brier[k])}});
  return {{"test_set", r.test_set},
          {"bootstrap", r.bootstrap},
          {"horizons", std::move(rows)},
          {"integrated_cindex", to_json(r.integrated_cindex)}};
}

// Transfer ---------------------------------------------------------------------

/// One strategy scored on one regime's test set by the model trained on that
/// regime (internal) and by the model trained on the other regime (transfer).
struct TransferRow {
  Strategy strategy = Strategy::feature;
  std::string target;  // regime whose test set is scored
  EvaluationReport internal;
  EvaluationReport transfer;

  /// |transfer - internal| of the integrated C-index (point estimates).
  [[nodiscard]] double difference() const {
    return transfer_loss({internal.integrated_cindex.point, internal.test_set},
                         {transfer.integrated_cindex.point, transfer.test_set});
  }
  /// Standard deviation of the difference of two independent bootstrap estimates.
  [[nodiscard]] double difference_std() const {
    return std::hypot(internal.integrated_cindex.std, transfer.integrated_cindex.std);
  }
};

struct TransferTable {
  std::vector<TransferRow> rows;
  std::size_t train_a = 0, train_b = 0, test_a = 0, test_b = 0;
};

/// Models trained on the size-matched regime-A and regime-B
/// training sets, both scored on each regime's test set.
inline TransferTable run_transfer(const Cohort& cohort, const std::vector<Strategy>& strategies, const ModelConfig& model,
                                  const TrainConfig& train, const EvaluationConfig& eval, std::uint64_t seed) {
  const auto split = split_regime_matched(cohort, derive_seed(seed, "transfer/split"), eval.test_fraction);
  TransferTable table;
  table.train_a = split.train_a.size();
  table.train_b = split.train_b.size();
  table.test_a = split.test_a.size();
  table.test_b = split.test_b.size();
  for (Strategy s : strategies) {
    TrainConfig tc = train;
    tc.seed = derive_seed(seed, "transfer/train");
    auto model_a = fit_strategy(cohort, split.train_a, s, model, tc);
    auto model_b = fit_strategy(cohort, split.train_b, s, model, tc);
    const std::uint64_t eval_seed = derive_seed(seed, "transfer/evaluate");
    const auto on_a_a = evaluate_predictions(predict(model_a.model, cohort, split.test_a), eval, eval_seed);
    const auto on_a_b = evaluate_predictions(predict(model_b.model, cohort, split.test_a), eval, eval_seed);
    const auto on_b_b = evaluate_predictions(predict(model_b.model, cohort, split.test_b), eval, eval_seed);
    const auto on_b_a = evaluate_predictions(predict(model_a.model, cohort, split.test_b), eval, eval_seed);
    table.rows.push_back({s, "B", on_b_b, on_b_a});
    table.rows.push_back({s, "A", on_a_a, on_a_b});
  }
  return table;
}

inline nlohmann::json to_json(const TransferTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json horizons = nlohmann::json::array();
    for (std::size_t k = 0; k < r.internal.horizons.size(); ++k) {
      horizons.push_back({{"horizon_days", r.internal.horizons[k]},
                          {"transfer", to_json(r.transfer.cindex[k])},
                          {"internal", to_json(r.internal.cindex[k])},
                          {"difference", std::abs(r.transfer.cindex[k].point - r.internal.cindex[k].point)}});
    }
    rows.push_back({{"strategy", to_string(r.strategy)},
                    {"target_regime", r.target},
                    {"test_set", r.internal.test_set},
                    {"integrated",
                     {{"transfer", to_json(r.transfer.integrated_cindex)},
                      {"internal", to_json(r.internal.integrated_cindex)},
                      {"difference", r.difference()},
                      {"difference_std", r.difference_std()}}},
                    {"horizons", std::move(horizons)},
                    {"internal_report", to_json(r.internal)},
                    {"transfer_report", to_json(r.transfer)}});
  }
  return {{"sizes", {{"train_a", t.train_a}, {"train_b", t.train_b}, {"test_a", t.test_a}, {"test_b", t.test_b}}},
          {"rows", std::move(rows)}};
}

/// Plain-text table, one row per strategy and target regime.
inline std::string format_transfer_table(const TransferTable& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "target  strategy      Transfer        Internal        Difference (integrated C-index)\n";
  for (const auto& r : t.rows) {
    os << std::left << std::setw(8) << r.target << std::setw(14) << to_string(r.strategy) << std::right
       << r.transfer.integrated_cindex.point << " (" << r.transfer.integrated_cindex.std << ")  "
       << r.internal.integrated_cindex.point << " (" << r.internal.integrated_cindex.std << ")  " << r.difference()
       << "\n";
  }
  return os.str();
}

// Perturbation probe -------------------------------------------------------------

inline EncounterSequence perturb_sequence(const EncounterSequence& s, PerturbKind kind, double r, Rng& rng) {
  EncounterSequence out = s;
  if (r == 0.0) return out;
  if (kind == PerturbKind::gap_jitter) {
    std::uniform_real_distribution<double> u(-r, r);
    double t = 0.0;
    for (std::size_t j = 0; j < s.length(); ++j) {
      const double gap = (j == 0 ? s.times[0] : s.times[j] - s.times[j - 1]) * std::exp(u(rng));
      t += gap;
      out.times[j] = t;
    }
    // Jitter may push the last encounter past the window; shrink the whole path back inside.
    if (out.times.back() > kWindowHours) {
      const double f = kWindowHours / out.times.back();
      for (auto& x : out.times) x *= f;
    }
    for (std::size_t j = 1; j < out.length(); ++j)
      if (!(out.times[j] > out.times[j - 1])) throw DataError("perturb: jitter collapsed two encounters");
  } else {
    for (std::size_t j = 0; j < s.length(); ++j)
      for (std::size_t c = 0; c < s.labs(); ++c)
        if (out.mask[j][c] && uniform01(rng) < r) {
          out.mask[j][c] = 0;
          out.values[j][c] = std::numeric_limits<double>::quiet_NaN();
        }
  }
  return out;
}

struct LossSnapshot {
  double survival = 0.0;
  double intensity = 0.0;
  double missingness = 0.0;
  double combined = 0.0;
};

/// Task losses of a model on a whole cohort subset (one batch).
inline LossSnapshot evaluate_losses(JointModel& model, const Cohort& cohort, const std::vector<std::size_t>& members,
                                    double alpha) {
  const auto data = prepare_dataset(cohort, members, model.config().strategy, model.statistics);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const Batch batch = make_batch(data, all, model);
  ad::Graph g;
  const auto l = task_losses(g, model, batch, {true, model.heads().intensity, model.heads().missingness});
  LossSnapshot s;
  s.survival = l.survival.valid() ? l.survival.value().item() : 0.0;
  s.intensity = l.intensity.valid() ? l.intensity.value().item() : 0.0;
  s.missingness = l.missingness.valid() ? l.missingness.value().item() : 0.0;
  s.combined = model.heads().count() == 0 ? s.survival
                                          : (1.0 - alpha) * s.survival + alpha * (s.intensity + s.missingness);
  return s;
}

struct PerturbReport {
  PerturbKind kind = PerturbKind::gap_jitter;
  double radius = 0.0;
  std::size_t copies = 0;
  LossSnapshot baseline;
  LossSnapshot delta;  // mean |loss(perturbed) - loss(original)| over copies
};

/// Empirical expected loss change when the observation process of every
/// test sequence is perturbed within radius r.
inline PerturbReport run_perturb(JointModel& model, const Cohort& cohort, const std::vector<std::size_t>& members,
                                 const PerturbConfig& cfg, double alpha, std::uint64_t seed) {
  if (!(cfg.radius >= 0.0)) throw ConfigError("perturb: radius must be non-negative");
  if (cfg.kind == PerturbKind::mask_dropout && !(cfg.radius < 1.0))
    throw ConfigError("perturb: mask dropout probability must be below 1");
  if (cfg.copies == 0) throw ConfigError("perturb: copies must be positive");
  PerturbReport rep;
  rep.kind = cfg.kind;
  rep.radius = cfg.radius;
  rep.copies = cfg.copies;
  rep.baseline = evaluate_losses(model, cohort, members, alpha);
  for (std::size_t k = 0; k < cfg.copies; ++k) {
    Cohort copy = cohort;
    for (auto i : members) {
      Rng rng(derive_seed(seed, "perturb/" + cohort[i].patient_id, k));
      copy[i] = perturb_sequence(cohort[i], cfg.kind, cfg.radius, rng);
    }
    const auto l = evaluate_losses(model, copy, members, alpha);
    rep.delta.survival += std::abs(l.survival - rep.baseline.survival);
    rep.delta.intensity += std::abs(l.intensity - rep.baseline.intensity);
    rep.delta.missingness += std::abs(l.missingness - rep.baseline.missingness);
    rep.delta.combined += std::abs(l.combined - rep.baseline.combined);
  }
  const double n = static_cast<double>(cfg.copies);
  rep.delta.survival /= n;
  rep.delta.intensity /= n;
  rep.delta.missingness /= n;
  rep.delta.combined /= n;
  return rep;
}

inline nlohmann::json to_json(const LossSnapshot& s) {
  return {{"survival", s.survival}, {"intensity", s.intensity}, {"missingness", s.missingness}, {"combined", s.combined}};
}

inline nlohmann::json to_json(const PerturbReport& r) {
  return {{"kind", to_string(r.kind)}, {"radius", r.radius},        {"copies", r.copies},
          {"baseline", to_json(r.baseline)}, {"delta", to_json(r.delta)}};
}

// Manifests ----------------------------------------------------------------------

/// Manifest skeleton; "timings" is the only field allowed to differ between reruns.
inline nlohmann::json make_manifest(const std::string& command, std::uint64_t seed, nlohmann::json config,
                                    nlohmann::json inputs) {
  return {{"format_version", kManifestFormatVersion},
          {"command", command},
          {"seed", seed},
          {"config", std::move(config)},
          {"inputs", std::move(inputs)},
          {"results", nlohmann::json::object()},
          {"timings", nlohmann::json::object()}};
}

inline nlohmann::json without_timings(nlohmann::json manifest) {
  manifest.erase("timings");
  return manifest;
}

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace deepjoint
