// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepjoint/model.hpp"
#include "deepjoint/optim.hpp"

namespace deepjoint {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 512;
  double alpha = 0.1;
  double theta = 2.0;
  std::size_t max_epochs = 1000;
  std::size_t joint_epochs = 500;
  std::size_t patience = 10;
  double val_fraction = 0.1;
  std::optional<double> clip_norm;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train: alpha must lie in [0, 1]");
    if (!(theta > 0.0)) throw ConfigError("train: theta must be positive");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (joint_epochs > max_epochs) throw ConfigError("train: joint_epochs must not exceed max_epochs");
    if (patience == 0) throw ConfigError("train: patience must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must lie in (0, 1)");
  }
};

// Dynamic weight averaging -----------------------------------------------------

/// Epoch-average training losses of the presence tasks, oldest first.
struct DwaState {
  std::vector<std::array<double, 2>> losses;  // {l_I, l_M} per completed epoch
};

struct DwaWeights {
  double intensity = 1.0;
  double missingness = 1.0;
  bool fallback = false;  // equal weights forced by a non-positive recorded loss
};

/// w = n * softmax(r / theta) over the enabled tasks, with r = L(s-1) / L(s-2).
/// Equal weights until two epochs are recorded; a lone task always gets 1.
inline DwaWeights dwa_weights(const DwaState& state, const HeadSet& heads, double theta) {
  if (!(theta > 0.0)) throw ConfigError("dwa: theta must be positive");
  DwaWeights w;
  if (heads.count() < 2 || state.losses.size() < 2) return w;
  const auto& prev = state.losses[state.losses.size() - 1];
  const auto& prev2 = state.losses[state.losses.size() - 2];
  for (int k = 0; k < 2; ++k) {
    if (!(prev[k] > 0.0) || !(prev2[k] > 0.0)) {
      w.fallback = true;
      return w;
    }
  }
  const double r_i = prev[0] / prev2[0] / theta;
  const double r_m = prev[1] / prev2[1] / theta;
  const double top = std::max(r_i, r_m);
  const double e_i = std::exp(r_i - top), e_m = std::exp(r_m - top);
  w.intensity = 2.0 * e_i / (e_i + e_m);
  w.missingness = 2.0 - w.intensity;
  return w;
}

/// (1 - alpha) l_S + alpha (w_I l_I + w_M l_M).
inline double combined_loss(double l_s, double l_i, double l_m, const DwaWeights& w, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("combined loss: alpha must lie in [0, 1]");
  return (1.0 - alpha) * l_s + alpha * (w.intensity * l_i + w.missingness * l_m);
}

// History ------------------------------------------------------------------------

struct EpochRecord {
  std::string phase;  // joint | finetune_survival | finetune_intensity | finetune_missingness
  std::size_t epoch = 0;
  double train_survival = 0.0;
  double train_intensity = 0.0;
  double train_missingness = 0.0;
  double train_combined = 0.0;
  DwaWeights weights;
  double val_loss = 0.0;
  bool improved = false;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"phase", r.phase},
          {"epoch", r.epoch},
          {"train", {{"survival", r.train_survival}, {"intensity", r.train_intensity},
                     {"missingness", r.train_missingness}, {"combined", r.train_combined}}},
          {"dwa", {{"intensity", r.weights.intensity}, {"missingness", r.weights.missingness},
                   {"fallback", r.weights.fallback}}},
          {"val_loss", r.val_loss},
          {"improved", r.improved}};
}

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_joint_val = std::numeric_limits<double>::infinity();
  std::size_t best_joint_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace train_detail {

inline std::vector<Tensor> snapshot(const std::vector<ad::Parameter*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

inline void restore(const std::vector<ad::Parameter*>& params, const std::vector<Tensor>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                         const std::string& label, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, label, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(order.begin() + static_cast<long>(start),
                     order.begin() + static_cast<long>(std::min(n, start + batch_size)));
  return out;
}

inline double value_or_zero(const ad::Var& v) { return v.valid() ? v.value().item() : 0.0; }

inline void check_finite(const ad::Gradients& grads, double loss, const std::string& phase, std::size_t epoch,
                         std::size_t batch, const std::string& components) {
  bool ok = std::isfinite(loss);
  for (const auto& [id, g] : grads) ok = ok && g.all_finite();
  if (!ok) {
    throw NumericalError("non-finite loss or gradient in " + phase + " epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + " (" + components + ")");
  }
}

inline std::string components(double s, double i, double m) {
  return "l_S=" + std::to_string(s) + ", l_I=" + std::to_string(i) + ", l_M=" + std::to_string(m);
}

}  // namespace train_detail

/// Phase 1: joint training of encoder and heads on the combined loss with
/// early stopping on the validation combined loss (task weights 1).
/// Phase 2: each head fine-tuned alone on cached embeddings, encoder frozen.
/// Finally the Breslow baseline is refitted on the training split.
inline TrainResult train_joint(JointModel& model, const PreparedDataset& train, const PreparedDataset& val,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  using namespace train_detail;
  cfg.validate();
  if (train.size() == 0) throw DataError("train: empty training split");
  if (val.size() == 0) throw DataError("train: empty validation split");
  const auto train_labels = train.labels();
  if (count_events(train_labels) == 0) throw DataError("train: no events in the training split");
  if (count_events(val.labels()) == 0) throw DataError("train: no events in the validation split");

  const HeadSet heads = model.heads();
  // Presence losses enter phase 1 only when they carry weight.
  const bool joint_presence = cfg.alpha > 0.0 && heads.count() > 0;
  const LossRequest joint_request{true, joint_presence && heads.intensity, joint_presence && heads.missingness};
  AdamConfig adam;
  adam.lr = cfg.lr;
  adam.clip_norm = cfg.clip_norm;

  TrainResult result;
  auto emit = [&](const EpochRecord& r) {
    result.history.push_back(r);
    if (on_epoch) on_epoch(r);
  };

  auto params = model.parameters();
  const Batch val_batch = [&] {
    std::vector<std::size_t> all(val.size());
    std::iota(all.begin(), all.end(), 0);
    return make_batch(val, all, model);
  }();
  auto joint_val_loss = [&] {
    ad::Graph g;
    const auto l = task_losses(g, model, val_batch, joint_request);
    const double s = value_or_zero(l.survival);
    if (!joint_presence) return s;
    return (1.0 - cfg.alpha) * s + cfg.alpha * (value_or_zero(l.intensity) + value_or_zero(l.missingness));
  };

  // Phase 1 ---------------------------------------------------------------------
  if (cfg.joint_epochs > 0) {
    AdamState state;
    DwaState dwa;
    auto best = snapshot(params);
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < cfg.joint_epochs; ++epoch) {
      EpochRecord rec;
      rec.phase = "joint";
      rec.epoch = epoch;
      rec.weights = dwa_weights(dwa, heads, cfg.theta);
      const auto batches = minibatches(train.size(), cfg.batch_size, cfg.seed, "train/joint/shuffle", epoch);
      double sum_s = 0, sum_i = 0, sum_m = 0, sum_c = 0;
      for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const Batch batch = make_batch(train, batches[bi], model);
        ad::Graph g;
        const auto l = task_losses(g, model, batch, joint_request);
        std::vector<ad::Var> terms;
        if (l.survival.valid()) terms.push_back(joint_presence ? (1.0 - cfg.alpha) * l.survival : l.survival);
        if (l.intensity.valid()) terms.push_back((cfg.alpha * rec.weights.intensity) * l.intensity);
        if (l.missingness.valid()) terms.push_back((cfg.alpha * rec.weights.missingness) * l.missingness);
        if (terms.empty()) continue;
        ad::Var total = terms[0];
        for (std::size_t k = 1; k < terms.size(); ++k) total = total + terms[k];
        const double s = value_or_zero(l.survival), i = value_or_zero(l.intensity), m = value_or_zero(l.missingness);
        const auto grads = g.backward(total);
        check_finite(grads, total.value().item(), "joint", epoch, bi, components(s, i, m));
        adam_step(params, grads, state, adam);
        sum_s += s;
        sum_i += i;
        sum_m += m;
        sum_c += total.value().item();
      }
      const double nb = static_cast<double>(batches.size());
      rec.train_survival = sum_s / nb;
      rec.train_intensity = sum_i / nb;
      rec.train_missingness = sum_m / nb;
      rec.train_combined = sum_c / nb;
      dwa.losses.push_back({rec.train_intensity, rec.train_missingness});
      rec.val_loss = joint_val_loss();
      if (!std::isfinite(rec.val_loss)) throw NumericalError("non-finite validation loss in joint epoch " + std::to_string(epoch));
      if (rec.val_loss < result.best_joint_val) {
        result.best_joint_val = rec.val_loss;
        result.best_joint_epoch = epoch;
        best = snapshot(params);
        rec.improved = true;
        stale = 0;
      } else {
        ++stale;
      }
      emit(rec);
      if (stale >= cfg.patience) break;
    }
    restore(params, best);
  }

  // Phase 2 ---------------------------------------------------------------------
  const std::size_t finetune_epochs = cfg.max_epochs - cfg.joint_epochs;
  const EmbeddingCache train_cache = cache_embeddings(model, train);
  const EmbeddingCache val_cache = cache_embeddings(model, val);
  const std::size_t d = model.embedding_dim();
  const std::size_t labs = model.config().labs;

  auto head_loss = [&](ad::Graph& g, const std::string& task, const PreparedDataset& data, const EmbeddingCache& cache,
                       std::span<const std::size_t> members) -> ad::Var {
    if (task == "survival") {
      std::vector<SurvivalLabel> labels;
      Tensor h(members.size(), d);
      for (std::size_t k = 0; k < members.size(); ++k) {
        labels.push_back(data.patients[members[k]].label);
        for (std::size_t c = 0; c < d; ++c) h(k, c) = cache.final(members[k], c);
      }
      if (count_events(labels) == 0) return {};
      return -cox_partial_loglik(model.survival().forward(g, g.constant(std::move(h))), labels);
    }
    std::size_t steps = 0;
    for (auto m : members) steps = std::max(steps, data.patients[m].steps());
    const auto rows = presence_rows(data, members, steps, labs, model.config().censored_interval);
    ad::Var h = g.constant(stacked_cached_steps(cache, members, steps, d));
    if (task == "intensity") return rows.any_intensity() ? temporal_loss(model.intensity(), h, rows) : ad::Var{};
    return rows.any_missing() ? missingness_loss(model.missingness(), h, rows) : ad::Var{};
  };

  std::vector<std::pair<std::string, std::vector<ad::Parameter*>>> tasks = {{"survival", model.survival_parameters()}};
  if (heads.intensity) tasks.emplace_back("intensity", model.intensity_parameters());
  if (heads.missingness) tasks.emplace_back("missingness", model.missingness_parameters());

  std::vector<std::size_t> val_all(val.size());
  std::iota(val_all.begin(), val_all.end(), 0);
  for (auto& [task, head_params] : tasks) {
    if (finetune_epochs == 0) break;
    AdamState state;
    auto val_task_loss = [&] {
      ad::Graph g;
      return value_or_zero(head_loss(g, task, val, val_cache, val_all));
    };
    double best_val = val_task_loss();
    auto best = snapshot(head_params);
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < finetune_epochs; ++epoch) {
      EpochRecord rec;
      rec.phase = "finetune_" + task;
      rec.epoch = epoch;
      const auto batches = minibatches(train.size(), cfg.batch_size, cfg.seed, "train/finetune/" + task, epoch);
      double sum = 0.0;
      for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        ad::Graph g;
        ad::Var loss = head_loss(g, task, train, train_cache, batches[bi]);
        if (!loss.valid()) continue;
        const auto grads = g.backward(loss);
        check_finite(grads, loss.value().item(), rec.phase, epoch, bi, task + "=" + std::to_string(loss.value().item()));
        adam_step(head_params, grads, state, adam);
        sum += loss.value().item();
      }
      const double avg = sum / static_cast<double>(batches.size());
      (task == "survival" ? rec.train_survival : task == "intensity" ? rec.train_intensity : rec.train_missingness) = avg;
      rec.train_combined = avg;
      rec.val_loss = val_task_loss();
      if (!std::isfinite(rec.val_loss)) throw NumericalError("non-finite validation loss in " + rec.phase);
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        best = snapshot(head_params);
        rec.improved = true;
        stale = 0;
      } else {
        ++stale;
      }
      emit(rec);
      if (stale >= cfg.patience) break;
    }
    restore(head_params, best);
  }

  // Breslow baseline on the training split.
  ad::Graph g;
  const auto eta = model.survival().forward(g, g.constant(train_cache.final)).value().values();
  model.breslow = breslow_fit(eta, train_labels);
  return result;
}

// Random search -----------------------------------------------------------------

/// Finite hyperparameter grid; head layer counts apply to every head.
struct SearchSpace {
  std::vector<double> lr = {1e-3, 1e-4};
  std::vector<std::size_t> batch_size = {512, 1024};
  std::vector<double> alpha = {0.1, 0.3};
  std::vector<std::size_t> rnn_layers = {1, 2};
  std::vector<std::size_t> hidden_dim = {10, 25};
  std::vector<std::size_t> head_layers = {0, 1, 2, 3};
  std::vector<std::size_t> nodes = {50};

  [[nodiscard]] bool empty() const {
    return lr.empty() || batch_size.empty() || alpha.empty() || rnn_layers.empty() || hidden_dim.empty() ||
           head_layers.empty() || nodes.empty();
  }
};

struct Candidate {
  ModelConfig model;
  TrainConfig train;
};

inline Candidate sample_candidate(const SearchSpace& space, const Candidate& base, Rng& rng) {
  auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  Candidate c = base;
  c.train.lr = pick(space.lr);
  c.train.batch_size = pick(space.batch_size);
  c.train.alpha = pick(space.alpha);
  c.model.num_layers = pick(space.rnn_layers);
  c.model.hidden_dim = pick(space.hidden_dim);
  auto layers = [&] { return std::vector<std::size_t>(pick(space.head_layers), pick(space.nodes)); };
  c.model.survival_layers = layers();
  c.model.intensity_layers = layers();
  c.model.missingness_layers = layers();
  return c;
}

struct LeaderboardEntry {
  std::size_t draw = 0;
  Candidate candidate;
  double score = 0.0;  // validation integrated C-index; higher is better
};

struct SearchResult {
  Candidate best;
  std::vector<LeaderboardEntry> leaderboard;  // in draw order
};

/// Draws configurations from the grid and keeps the highest-scoring one.
/// score(candidate, draw_seed) trains and scores a candidate.
inline SearchResult random_search(const SearchSpace& space, const Candidate& base, std::size_t draws,
                                  std::uint64_t seed,
                                  const std::function<double(const Candidate&, std::uint64_t)>& score) {
  if (space.empty()) throw ConfigError("search: empty hyperparameter space");
  if (draws == 0) throw ConfigError("search: draws must be positive");
  Rng rng = make_rng(seed, "search/sample");
  SearchResult out;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < draws; ++k) {
    LeaderboardEntry e;
    e.draw = k;
    e.candidate = sample_candidate(space, base, rng);
    e.candidate.train.seed = derive_seed(seed, "search/draw", k);
    e.score = score(e.candidate, e.candidate.train.seed);
    if (e.score > best) {
      best = e.score;
      out.best = e.candidate;
    }
    out.leaderboard.push_back(std::move(e));
  }
  return out;
}

}  // namespace deepjoint
