// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "deepjoint/layers.hpp"

namespace deepjoint {

enum class CellKind { lstm, gru, gru_d };

inline std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
    case CellKind::gru_d: return "gru_d";
  }
  return "?";
}

inline CellKind parse_cell(std::string_view s) {
  if (s == "lstm") return CellKind::lstm;
  if (s == "gru") return CellKind::gru;
  if (s == "gru_d") return CellKind::gru_d;
  throw ConfigError("unknown recurrent cell '" + std::string(s) + "'");
}

struct RecurrentConfig {
  CellKind cell = CellKind::lstm;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 10;
  std::size_t num_layers = 1;

  void validate() const {
    if (input_dim == 0 || hidden_dim == 0) throw ConfigError("recurrent: dimensions must be positive");
    if (num_layers < 1 || num_layers > 2) throw ConfigError("recurrent: num_layers must be 1 or 2");
  }
};

/// Recurrent state of one layer for a batch of sequences.
/// cell holds the LSTM memory C; last_observed holds GRU-D's last observed inputs.
struct CellState {
  ad::Var h;
  ad::Var cell;
  ad::Var last_observed;
};

// Gate columns are laid out [forget | input | output | candidate].
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::string_view prefix, std::size_t in, std::size_t hidden, Rng& rng)
      : in_(in), hidden_(hidden) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    const std::string p(prefix);
    wx_ = {p + "/wx", uniform_tensor(in, 4 * hidden, bound, rng)};
    wh_ = {p + "/wh", uniform_tensor(hidden, 4 * hidden, bound, rng)};
    b_ = {p + "/bias", uniform_tensor(1, 4 * hidden, bound, rng)};
  }

  [[nodiscard]] std::size_t input_dim() const noexcept { return in_; }
  [[nodiscard]] std::size_t hidden_dim() const noexcept { return hidden_; }

  CellState initial(ad::Graph& g, std::size_t batch) const {
    return {g.constant(Tensor(batch, hidden_)), g.constant(Tensor(batch, hidden_)), {}};
  }

  CellState step(ad::Graph& g, ad::Var x, const CellState& s) {
    check_input(x, in_, "lstm");
    const std::size_t d = hidden_;
    ad::Var pre = ad::add_broadcast(
        ad::matmul(x, g.parameter(wx_)) + ad::matmul(s.h, g.parameter(wh_)), g.parameter(b_));
    ad::Var f = ad::sigmoid(ad::slice(pre, 1, 0, d));
    ad::Var i = ad::sigmoid(ad::slice(pre, 1, d, 2 * d));
    ad::Var o = ad::sigmoid(ad::slice(pre, 1, 2 * d, 3 * d));
    ad::Var candidate = ad::tanh(ad::slice(pre, 1, 3 * d, 4 * d));
    ad::Var c = f * s.cell + i * candidate;
    return {o * ad::tanh(c), c, {}};
  }

  std::vector<ad::Parameter*> parameters() { return {&wx_, &wh_, &b_}; }

  static void check_input(ad::Var x, std::size_t in, const char* who) {
    if (x.cols() != in) {
      throw ShapeError(std::string(who) + ": input has " + std::to_string(x.cols()) +
                       " features, expected " + std::to_string(in));
    }
  }

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  ad::Parameter wx_, wh_, b_;
};

// z (update) and r (reset) gates share one affine map laid out [z | r].
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::string_view prefix, std::size_t in, std::size_t hidden, Rng& rng)
      : in_(in), hidden_(hidden) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    const std::string p(prefix);
    wx_gates_ = {p + "/wx_gates", uniform_tensor(in, 2 * hidden, bound, rng)};
    wh_gates_ = {p + "/wh_gates", uniform_tensor(hidden, 2 * hidden, bound, rng)};
    b_gates_ = {p + "/bias_gates", uniform_tensor(1, 2 * hidden, bound, rng)};
    wx_cand_ = {p + "/wx_candidate", uniform_tensor(in, hidden, bound, rng)};
    wh_cand_ = {p + "/wh_candidate", uniform_tensor(hidden, hidden, bound, rng)};
    b_cand_ = {p + "/bias_candidate", uniform_tensor(1, hidden, bound, rng)};
  }

  [[nodiscard]] std::size_t input_dim() const noexcept { return in_; }
  [[nodiscard]] std::size_t hidden_dim() const noexcept { return hidden_; }

  CellState initial(ad::Graph& g, std::size_t batch) const {
    return {g.constant(Tensor(batch, hidden_)), {}, {}};
  }

  CellState step(ad::Graph& g, ad::Var x, const CellState& s) {
    LstmCell::check_input(x, in_, "gru");
    const std::size_t d = hidden_;
    ad::Var gates = ad::add_broadcast(
        ad::matmul(x, g.parameter(wx_gates_)) + ad::matmul(s.h, g.parameter(wh_gates_)),
        g.parameter(b_gates_));
    ad::Var z = ad::sigmoid(ad::slice(gates, 1, 0, d));
    ad::Var r = ad::sigmoid(ad::slice(gates, 1, d, 2 * d));
    ad::Var candidate = ad::tanh(ad::add_broadcast(
        ad::matmul(x, g.parameter(wx_cand_)) + ad::matmul(r * s.h, g.parameter(wh_cand_)),
        g.parameter(b_cand_)));
    ad::Var keep = (-z) + 1.0;
    return {keep * s.h + z * candidate, {}, {}};
  }

  std::vector<ad::Parameter*> parameters() {
    return {&wx_gates_, &wh_gates_, &b_gates_, &wx_cand_, &wh_cand_, &b_cand_};
  }
  ad::Parameter& update_gate_bias() noexcept { return b_gates_; }

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  ad::Parameter wx_gates_, wh_gates_, b_gates_, wx_cand_, wh_cand_, b_cand_;
};

/// GRU with exponential input and hidden-state decay driven by the gap since
/// the previous encounter. The wrapped GRU sees [imputed values ; mask].
class GruDCell {
 public:
  GruDCell() = default;
  GruDCell(std::string_view prefix, std::size_t features, std::size_t hidden, Rng& rng)
      : features_(features),
        gru_(std::string(prefix) + "/gru", 2 * features, hidden, rng),
        means_(1, features) {
    const std::string p(prefix);
    // Zero decay parameters make gamma = 1: the cell starts as a plain GRU.
    wx_decay_ = {p + "/wx_decay", Tensor(1, features)};
    bx_decay_ = {p + "/bx_decay", Tensor(1, features)};
    wh_decay_ = {p + "/wh_decay", Tensor(1, hidden)};
    bh_decay_ = {p + "/bh_decay", Tensor(1, hidden)};
  }

  [[nodiscard]] std::size_t input_dim() const noexcept { return features_; }
  [[nodiscard]] std::size_t hidden_dim() const noexcept { return gru_.hidden_dim(); }

  /// Empirical per-feature means (training split) that decayed inputs relax towards.
  void set_means(Tensor means) {
    if (means.rows() != 1 || means.cols() != features_) throw ShapeError("gru-d: means shape");
    means_ = std::move(means);
  }
  [[nodiscard]] const Tensor& means() const noexcept { return means_; }

  CellState initial(ad::Graph& g, std::size_t batch) const {
    Tensor last(batch, features_);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < features_; ++c) last(r, c) = means_(0, c);
    return {g.constant(Tensor(batch, gru_.hidden_dim())), {}, g.constant(std::move(last))};
  }

  /// x, mask: [B, K]; delta: [B, 1] hours since the previous encounter.
  CellState step(ad::Graph& g, ad::Var x, ad::Var mask, ad::Var delta, const CellState& s) {
    LstmCell::check_input(x, features_, "gru-d");
    if (!mask.value().same_shape(x.value()) || delta.cols() != 1 || delta.rows() != x.rows()) {
      throw ShapeError("gru-d: mask/delta shapes do not match input " + x.value().shape_string());
    }
    for (double e : delta.value().data())
      if (!(e >= 0.0)) throw DomainError("gru-d: negative time gap " + std::to_string(e));
    ad::Var gamma_x = ad::exp(-ad::relu(ad::add_broadcast(
        ad::matmul(delta, g.parameter(wx_decay_)), g.parameter(bx_decay_))));
    ad::Var gamma_h = ad::exp(-ad::relu(ad::add_broadcast(
        ad::matmul(delta, g.parameter(wh_decay_)), g.parameter(bh_decay_))));
    ad::Var mean = ad::broadcast(g.constant(means_), x.rows(), features_);
    ad::Var missing = (-mask) + 1.0;
    ad::Var fallback = gamma_x * s.last_observed + ((-gamma_x) + 1.0) * mean;
    ad::Var imputed = mask * x + missing * fallback;
    CellState decayed{gamma_h * s.h, {}, {}};
    CellState out = gru_.step(g, ad::concat({imputed, mask}, 1), decayed);
    out.last_observed = mask * x + missing * s.last_observed;
    return out;
  }

  std::vector<ad::Parameter*> parameters() {
    auto out = gru_.parameters();
    out.insert(out.end(), {&wx_decay_, &bx_decay_, &wh_decay_, &bh_decay_});
    return out;
  }
  GruCell& gru() noexcept { return gru_; }
  std::vector<ad::Parameter*> decay_parameters() {
    return {&wx_decay_, &bx_decay_, &wh_decay_, &bh_decay_};
  }

 private:
  std::size_t features_ = 0;
  GruCell gru_;
  Tensor means_;
  ad::Parameter wx_decay_, bx_decay_, wh_decay_, bh_decay_;
};

/// Time-major batch of padded sequences. valid[t] is 1 for rows that have an
/// encounter at step t; padded steps leave the state unchanged.
struct SequenceBatch {
  std::size_t batch = 0;
  std::vector<Tensor> inputs;    // [B, F] per step
  std::vector<Tensor> valid;     // [B, 1] per step
  std::vector<Tensor> observed;  // [B, K] per step, GRU-D only
  std::vector<Tensor> delta;     // [B, 1] per step, GRU-D only
  std::vector<std::size_t> lengths;

  [[nodiscard]] std::size_t steps() const noexcept { return inputs.size(); }
};

/// Stacked recurrent encoder. For gru_d the first layer is a GRU-D cell and
/// any further layer a GRU.
class Encoder {
 public:
  using Layer = std::variant<LstmCell, GruCell, GruDCell>;

  Encoder() = default;
  Encoder(RecurrentConfig cfg, std::string_view prefix, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    std::size_t in = cfg_.input_dim;
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      const std::string p = std::string(prefix) + "/layer" + std::to_string(l);
      switch (cfg_.cell) {
        case CellKind::lstm: layers_.emplace_back(LstmCell(p, in, cfg_.hidden_dim, rng)); break;
        case CellKind::gru: layers_.emplace_back(GruCell(p, in, cfg_.hidden_dim, rng)); break;
        case CellKind::gru_d:
          if (l == 0) layers_.emplace_back(GruDCell(p, in, cfg_.hidden_dim, rng));
          else layers_.emplace_back(GruCell(p, in, cfg_.hidden_dim, rng));
          break;
      }
      in = cfg_.hidden_dim;
    }
  }

  [[nodiscard]] const RecurrentConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::size_t hidden_dim() const noexcept { return cfg_.hidden_dim; }

  /// Top-layer embedding after every step; entry t is [B, d].
  std::vector<ad::Var> encode(ad::Graph& g, const SequenceBatch& batch) {
    if (batch.steps() == 0 || batch.batch == 0) throw ContractError("encoder: empty sequence batch");
    const std::size_t b = batch.batch;
    std::vector<CellState> states;
    for (auto& layer : layers_)
      states.push_back(std::visit([&](auto& c) { return c.initial(g, b); }, layer));

    std::vector<ad::Var> out;
    out.reserve(batch.steps());
    for (std::size_t t = 0; t < batch.steps(); ++t) {
      const bool all_valid = std::all_of(batch.valid[t].data().begin(), batch.valid[t].data().end(),
                                         [](double v) { return v == 1.0; });
      ad::Var keep_new, keep_old;
      if (!all_valid) {
        keep_new = g.constant(batch.valid[t]);
        keep_old = g.constant(complement(batch.valid[t]));
      }
      ad::Var x = g.constant(batch.inputs[t]);
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        CellState& s = states[l];
        CellState next = std::visit(
            [&](auto& cell) -> CellState {
              using T = std::decay_t<decltype(cell)>;
              if constexpr (std::is_same_v<T, GruDCell>) {
                return cell.step(g, x, g.constant(batch.observed[t]), g.constant(batch.delta[t]), s);
              } else {
                return cell.step(g, x, s);
              }
            },
            layers_[l]);
        s.h = blend(keep_new, keep_old, next.h, s.h);
        if (next.cell.valid()) s.cell = blend(keep_new, keep_old, next.cell, s.cell);
        if (next.last_observed.valid())
          s.last_observed = blend(keep_new, keep_old, next.last_observed, s.last_observed);
        x = s.h;
      }
      out.push_back(x);
    }
    return out;
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& layer : layers_) {
      auto p = std::visit([](auto& c) { return c.parameters(); }, layer);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  std::vector<Layer>& layers() noexcept { return layers_; }

  void set_gru_d_means(const Tensor& means) {
    if (!layers_.empty())
      if (auto* c = std::get_if<GruDCell>(&layers_.front())) c->set_means(means);
  }

 private:
  static Tensor complement(const Tensor& m) {
    Tensor out = m;
    for (auto& v : out.data()) v = 1.0 - v;
    return out;
  }

  // valid rows take the new state, padded rows keep the old one.
  static ad::Var blend(ad::Var keep_new, ad::Var keep_old, ad::Var fresh, ad::Var old) {
    if (!keep_new.valid()) return fresh;
    const std::size_t r = fresh.rows(), c = fresh.cols();
    return ad::broadcast(keep_new, r, c) * fresh + ad::broadcast(keep_old, r, c) * old;
  }

  RecurrentConfig cfg_;
  std::vector<Layer> layers_;
};

}  // namespace deepjoint
