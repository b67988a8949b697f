// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepjoint/pipeline.hpp"
#include "deepjoint/presence.hpp"
#include "deepjoint/recurrent.hpp"
#include "deepjoint/survival.hpp"

namespace deepjoint {

/// Which clinical-presence heads a strategy trains besides the survival head.
struct HeadSet {
  bool intensity = false;
  bool missingness = false;

  [[nodiscard]] std::size_t count() const noexcept { return (intensity ? 1 : 0) + (missingness ? 1 : 0); }
};

inline HeadSet heads_for(Strategy s) {
  switch (s) {
    case Strategy::deepjoint: return {true, true};
    case Strategy::deepjoint_i: return {true, false};
    case Strategy::deepjoint_m: return {false, true};
    default: return {};
  }
}

struct ModelConfig {
  Strategy strategy = Strategy::deepjoint;
  std::size_t labs = 1;
  CellKind cell = CellKind::lstm;  // gru_d strategy always uses the GRU-D cell
  std::size_t hidden_dim = 10;
  std::size_t num_layers = 1;
  std::vector<std::size_t> survival_layers = {50};
  std::vector<std::size_t> intensity_layers = {50};
  std::vector<std::size_t> missingness_layers = {50};
  Activation activation = Activation::tanh;  // hidden activation of all heads
  bool censored_interval = false;            // add Lambda of the final censored gap to l_I

  [[nodiscard]] CellKind effective_cell() const { return strategy == Strategy::gru_d ? CellKind::gru_d : cell; }

  void validate() const {
    if (labs == 0) throw ConfigError("model: labs must be positive");
    if (hidden_dim == 0) throw ConfigError("model: hidden_dim must be positive");
    if (num_layers < 1 || num_layers > 2) throw ConfigError("model: num_layers must be 1 or 2");
    if (activation == Activation::relu && heads_for(strategy).intensity) {
      throw ConfigError("model: the intensity head needs a smooth monotone activation (tanh, softplus, sigmoid)");
    }
  }
};

/// Shared encoder plus survival, intensity and missingness heads, with the
/// training statistics and Breslow baseline needed for prediction.
/// Each component draws its initial weights from its own seeded stream.
class JointModel {
 public:
  JointModel() = default;
  JointModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), heads_(heads_for(cfg_.strategy)) {
    cfg_.validate();
    const std::size_t width = input_width(cfg_.strategy, cfg_.labs);
    std::size_t embedding = width;
    if (input_kind(cfg_.strategy) == InputKind::sequence) {
      Rng rng = make_rng(seed, "init/encoder");
      encoder_ = Encoder({cfg_.effective_cell(), width, cfg_.hidden_dim, cfg_.num_layers}, "encoder", rng);
      embedding = cfg_.hidden_dim;
    }
    embedding_dim_ = embedding;
    {
      Rng rng = make_rng(seed, "init/survival");
      survival_ = Mlp({embedding, cfg_.survival_layers, cfg_.activation, 1, std::nullopt}, "survival", rng);
    }
    if (heads_.intensity) {
      Rng rng = make_rng(seed, "init/intensity");
      intensity_ = PositiveMlp({embedding, cfg_.intensity_layers, cfg_.activation, 1, std::nullopt}, "intensity", rng);
    }
    if (heads_.missingness) {
      Rng rng = make_rng(seed, "init/missingness");
      missingness_ = Mlp(missingness_config(embedding, cfg_.labs, cfg_.missingness_layers, cfg_.activation),
                         "missingness", rng);
    }
  }

  [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const HeadSet& heads() const noexcept { return heads_; }
  [[nodiscard]] std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  [[nodiscard]] bool has_encoder() const noexcept { return encoder_.has_value(); }

  Encoder& encoder() { return *encoder_; }
  Mlp& survival() { return survival_; }
  PositiveMlp& intensity() { return *intensity_; }
  Mlp& missingness() { return *missingness_; }

  std::vector<ad::Parameter*> encoder_parameters() {
    return encoder_ ? encoder_->parameters() : std::vector<ad::Parameter*>{};
  }
  std::vector<ad::Parameter*> survival_parameters() { return survival_.parameters(); }
  std::vector<ad::Parameter*> intensity_parameters() {
    return intensity_ ? intensity_->parameters() : std::vector<ad::Parameter*>{};
  }
  std::vector<ad::Parameter*> missingness_parameters() {
    return missingness_ ? missingness_->parameters() : std::vector<ad::Parameter*>{};
  }
  std::vector<ad::Parameter*> parameters() {
    auto out = encoder_parameters();
    for (auto&& group : {survival_parameters(), intensity_parameters(), missingness_parameters()})
      out.insert(out.end(), group.begin(), group.end());
    return out;
  }

  /// Feature means the GRU-D inputs decay towards; fitted on the training split.
  void set_gru_d_means(const Tensor& means) {
    if (encoder_) encoder_->set_gru_d_means(means);
  }

  TrainStatistics statistics;
  BreslowTable breslow;

 private:
  ModelConfig cfg_;
  HeadSet heads_;
  std::size_t embedding_dim_ = 0;
  std::optional<Encoder> encoder_;
  Mlp survival_;
  std::optional<PositiveMlp> intensity_;
  std::optional<Mlp> missingness_;
};

/// Mean of each z-scored input feature over its observed entries; the GRU-D decay target.
inline Tensor gru_d_means(const PreparedDataset& train, std::size_t labs) {
  Tensor sum(1, labs), n(1, labs), out(1, labs);
  for (const auto& p : train.patients)
    for (std::size_t j = 0; j < p.steps(); ++j)
      for (std::size_t c = 0; c < labs; ++c)
        if (p.observed(j, c) != 0.0) {
          sum[c] += p.inputs(j, c);
          n[c] += 1.0;
        }
  for (std::size_t c = 0; c < labs; ++c) out[c] = n[c] > 0.0 ? sum[c] / n[c] : 0.0;
  return out;
}

/// One minibatch in model-ready form.
struct Batch {
  std::vector<std::size_t> members;  // indices into the dataset
  std::vector<SurvivalLabel> labels;
  Tensor flat;                       // [B, F] for flat strategies
  SequenceBatch sequence;            // time-major, for sequence strategies
  PresenceRows rows;                 // t-major: row t * B + b is patient b after encounter t

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
};

/// Presence targets for patients whose step embeddings are stacked t-major
/// over `steps` steps. Weights average intervals within a patient, then patients.
inline PresenceRows presence_rows(const PreparedDataset& data, std::span<const std::size_t> members, std::size_t steps,
                                  std::size_t labs, bool censored_interval) {
  const std::size_t b = members.size();
  PresenceRows rows;
  rows.gaps = Tensor(steps * b, 1, 1.0);
  rows.next_mask = Tensor(steps * b, labs);
  rows.intensity_weight = Tensor(steps * b, 1);
  rows.missing_weight = Tensor(steps * b, 1);
  rows.censored = Tensor(steps * b, 1);
  std::size_t intensity_patients = 0, missing_patients = 0;
  for (auto m : members) {
    const auto& p = data.patients[m];
    const std::size_t l = p.encounters();
    intensity_patients += (l > 1 || (censored_interval && p.window_remaining > 0.0)) ? 1 : 0;
    missing_patients += l > 1 ? 1 : 0;
  }
  for (std::size_t k = 0; k < b; ++k) {
    const auto& p = data.patients[members[k]];
    const std::size_t l = p.encounters();
    const bool tail = censored_interval && p.window_remaining > 0.0;
    const double n_int = static_cast<double>(l - 1) + (tail ? 1.0 : 0.0);
    for (std::size_t t = 0; t + 1 < l; ++t) {
      const std::size_t r = t * b + k;
      rows.gaps[r] = p.gaps[t + 1];
      for (std::size_t c = 0; c < labs; ++c) rows.next_mask(r, c) = p.observed(t + 1, c);
      rows.intensity_weight[r] = 1.0 / n_int / static_cast<double>(intensity_patients);
      rows.missing_weight[r] = 1.0 / static_cast<double>(l - 1) / static_cast<double>(missing_patients);
    }
    if (tail) {
      const std::size_t r = (l - 1) * b + k;
      rows.gaps[r] = p.window_remaining;
      rows.censored[r] = 1.0;
      rows.intensity_weight[r] = 1.0 / n_int / static_cast<double>(intensity_patients);
    }
  }
  return rows;
}

inline Batch make_batch(const PreparedDataset& data, std::span<const std::size_t> members, const JointModel& model) {
  if (members.empty()) throw ContractError("batch: no patients");
  Batch batch;
  batch.members.assign(members.begin(), members.end());
  for (auto m : members) batch.labels.push_back(data.patients[m].label);
  const std::size_t b = members.size();
  const std::size_t width = input_width(model.config().strategy, model.config().labs);
  if (input_kind(model.config().strategy) == InputKind::flat) {
    batch.flat = Tensor(b, width);
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t c = 0; c < width; ++c) batch.flat(k, c) = data.patients[members[k]].inputs(0, c);
    return batch;
  }
  std::size_t steps = 0;
  for (auto m : members) steps = std::max(steps, data.patients[m].steps());
  auto& seq = batch.sequence;
  seq.batch = b;
  const bool gru_d = model.config().effective_cell() == CellKind::gru_d;
  const std::size_t labs = model.config().labs;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x(b, width), valid(b, 1);
    Tensor obs, delta;
    if (gru_d) {
      obs = Tensor(b, labs);
      delta = Tensor(b, 1);
    }
    for (std::size_t k = 0; k < b; ++k) {
      const auto& p = data.patients[members[k]];
      if (t >= p.steps()) continue;
      valid[k] = 1.0;
      for (std::size_t c = 0; c < width; ++c) x(k, c) = p.inputs(t, c);
      if (gru_d) {
        for (std::size_t c = 0; c < labs; ++c) obs(k, c) = p.observed(t, c);
        delta[k] = p.gaps[t];
      }
    }
    seq.inputs.push_back(std::move(x));
    seq.valid.push_back(std::move(valid));
    if (gru_d) {
      seq.observed.push_back(std::move(obs));
      seq.delta.push_back(std::move(delta));
    }
  }
  for (auto m : members) seq.lengths.push_back(data.patients[m].steps());
  if (model.heads().count() > 0) {
    batch.rows = presence_rows(data, members, steps, labs, model.config().censored_interval);
  }
  return batch;
}

/// Encoder outputs for a batch: the final embedding per patient and, for
/// sequence strategies, every step's embedding.
struct Embedding {
  ad::Var final;
  std::vector<ad::Var> steps;
};

inline Embedding embed(ad::Graph& g, JointModel& model, const Batch& batch) {
  if (!model.has_encoder()) return {g.constant(batch.flat), {}};
  auto steps = model.encoder().encode(g, batch.sequence);
  return {steps.back(), std::move(steps)};
}

/// Step embeddings stacked t-major to align with Batch::rows.
inline ad::Var stacked_steps(const Embedding& e) { return e.steps.size() == 1 ? e.steps[0] : ad::concat(e.steps, 0); }

/// Per-task minimisation losses of one batch. Absent tasks stay invalid.
struct TaskLosses {
  ad::Var survival;     // negative mean partial log-likelihood; invalid when the batch has no events
  ad::Var intensity;
  ad::Var missingness;
};

struct LossRequest {
  bool survival = true;
  bool intensity = false;
  bool missingness = false;
};

inline TaskLosses task_losses(ad::Graph& g, JointModel& model, const Batch& batch, LossRequest req) {
  TaskLosses out;
  const Embedding e = embed(g, model, batch);
  if (req.survival && count_events(batch.labels) > 0) {
    ad::Var eta = model.survival().forward(g, e.final);
    out.survival = -cox_partial_loglik(eta, batch.labels);
  }
  if ((req.intensity && model.heads().intensity) || (req.missingness && model.heads().missingness)) {
    ad::Var h = stacked_steps(e);
    if (req.intensity && model.heads().intensity) out.intensity = temporal_loss(model.intensity(), h, batch.rows);
    if (req.missingness && model.heads().missingness)
      out.missingness = missingness_loss(model.missingness(), h, batch.rows);
  }
  return out;
}

/// Final embeddings [N, d] and per-patient step embeddings, computed without gradients.
struct EmbeddingCache {
  Tensor final;
  std::vector<Tensor> steps;  // [L_i, d] per patient (sequence strategies only)
};

inline EmbeddingCache cache_embeddings(JointModel& model, const PreparedDataset& data, std::size_t chunk = 256) {
  EmbeddingCache cache;
  const std::size_t n = data.size();
  const std::size_t d = model.embedding_dim();
  cache.final = Tensor(n, d);
  cache.steps.resize(n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    std::span<const std::size_t> members(idx.data() + start, end - start);
    Batch batch = make_batch(data, members, model);
    ad::Graph g;
    const Embedding e = embed(g, model, batch);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t i = members[k];
      for (std::size_t c = 0; c < d; ++c) cache.final(i, c) = e.final.value()(k, c);
      if (!e.steps.empty()) {
        const std::size_t len = data.patients[i].steps();
        cache.steps[i] = Tensor(len, d);
        for (std::size_t t = 0; t < len; ++t)
          for (std::size_t c = 0; c < d; ++c) cache.steps[i](t, c) = e.steps[t].value()(k, c);
      }
    }
  }
  return cache;
}

/// Step embeddings of cached patients stacked t-major over `steps` steps (zero padded).
inline Tensor stacked_cached_steps(const EmbeddingCache& cache, std::span<const std::size_t> members,
                                   std::size_t steps, std::size_t d) {
  const std::size_t b = members.size();
  Tensor out(steps * b, d);
  for (std::size_t k = 0; k < b; ++k) {
    const Tensor& h = cache.steps[members[k]];
    for (std::size_t t = 0; t < h.rows() && t < steps; ++t)
      for (std::size_t c = 0; c < d; ++c) out(t * b + k, c) = h(t, c);
  }
  return out;
}

/// Log-hazards of every patient in a dataset.
inline std::vector<double> predict_log_hazard(JointModel& model, const PreparedDataset& data, std::size_t chunk = 256) {
  const auto cache = cache_embeddings(model, data, chunk);
  ad::Graph g;
  ad::Var eta = model.survival().forward(g, g.constant(cache.final));
  return eta.value().values();
}

}  // namespace deepjoint
