// SPDX-License-Identifier: Apache-2.0
#pragma once

// Clinical-presence heads. The intensity head I outputs the cumulative hazard
// Lambda(h, eps) of the gap to the next encounter; its density term is the
// derivative dLambda/deps, built as a graph so training differentiates
// through it. The missingness head M outputs the probability that each lab
// is measured at the next encounter, given the gap.

#include <limits>
#include <utility>
#include <vector>

#include "deepjoint/autodiff.hpp"
#include "deepjoint/layers.hpp"

namespace deepjoint {

inline constexpr double kProbabilityFloor = 1e-12;

/// Stacked next-encounter targets, one row per (patient, encounter) pair.
/// Rows with zero weight are padding and never influence a loss.
struct PresenceRows {
  Tensor gaps;              // [R, 1] hours to the next encounter (window end when censored)
  Tensor next_mask;         // [R, K] labs measured at the next encounter
  Tensor intensity_weight;  // [R, 1]
  Tensor missing_weight;    // [R, 1]
  Tensor censored;          // [R, 1] 1 for the final, censored interval

  [[nodiscard]] std::size_t rows() const noexcept { return gaps.rows(); }
  [[nodiscard]] bool any_intensity() const {
    for (double w : intensity_weight.data())
      if (w != 0.0) return true;
    return false;
  }
  [[nodiscard]] bool any_missing() const {
    for (double w : missing_weight.data())
      if (w != 0.0) return true;
    return false;
  }
};

namespace detail {

inline Tensor pick_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  Tensor out(index.size(), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(index[r], c);
  return out;
}

// Drops zero-weight rows so padding costs nothing downstream.
inline std::pair<ad::Var, PresenceRows> active_rows(ad::Var h, const PresenceRows& rows, const Tensor& weight) {
  std::vector<std::size_t> index;
  for (std::size_t r = 0; r < rows.rows(); ++r)
    if (weight[r] != 0.0) index.push_back(r);
  if (index.size() == rows.rows()) return {h, rows};
  PresenceRows out;
  out.gaps = pick_rows(rows.gaps, index);
  out.next_mask = pick_rows(rows.next_mask, index);
  out.intensity_weight = pick_rows(rows.intensity_weight, index);
  out.missing_weight = pick_rows(rows.missing_weight, index);
  out.censored = pick_rows(rows.censored, index);
  return {ad::gather_rows(h, std::move(index)), std::move(out)};
}

}  // namespace detail

/// Lambda(h, eps) of shape [R, 1].
inline ad::Var cumulative_intensity(PositiveMlp& head, ad::Var h, ad::Var eps) {
  return head.cumulative(h.graph(), h, eps);
}

/// Lambda and lambda = dLambda/deps for rows of (h, eps); lambda is a graph node.
struct IntensityTerms {
  ad::Var cumulative;
  ad::Var rate;
};

inline IntensityTerms intensity_terms(PositiveMlp& head, ad::Var h, const Tensor& gaps) {
  ad::Graph& g = h.graph();
  ad::Var eps = g.variable(gaps);
  ad::Var cumulative = cumulative_intensity(head, h, eps);
  // Rows are independent, so d(sum Lambda)/d eps_r = dLambda_r/d eps_r.
  ad::Var rate = g.grad_wrt_input(ad::sum(cumulative), eps);
  for (double v : rate.value().data()) {
    if (!(v >= 0.0)) throw NumericalError("intensity head produced a negative density");
  }
  return {cumulative, rate};
}

/// l_I: patient-averaged negative log-likelihood of the observed gaps,
/// Lambda(eps) - log lambda(eps) per uncensored interval (Lambda only for a
/// censored final interval when those rows carry weight).
inline ad::Var temporal_loss(PositiveMlp& head, ad::Var h_all, const PresenceRows& all) {
  ad::Graph& g = h_all.graph();
  if (!all.any_intensity()) return g.constant(Tensor::scalar(0.0));
  auto [h, rows] = detail::active_rows(h_all, all, all.intensity_weight);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    if (rows.intensity_weight[r] != 0.0 && rows.censored[r] == 0.0 && !(rows.gaps[r] > 0.0)) {
      throw DomainError("temporal loss: non-positive gap " + std::to_string(rows.gaps[r]));
    }
  }
  auto [cumulative, rate] = intensity_terms(head, h, rows.gaps);
  ad::Var log_rate = ad::log(ad::clamp(rate, kProbabilityFloor, std::numeric_limits<double>::max()));
  Tensor uncensored = rows.censored;
  for (auto& v : uncensored.data()) v = 1.0 - v;
  ad::Var terms = cumulative - g.constant(std::move(uncensored)) * log_rate;
  return ad::sum(g.constant(rows.intensity_weight) * terms);
}

/// Probabilities [R, K] that each lab is measured by gap eps, clamped away from 0 and 1.
inline ad::Var missingness_probs(Mlp& head, ad::Var h, ad::Var eps) {
  ad::Var p = head.forward(h.graph(), ad::concat({h, eps}, 1));
  return ad::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

inline std::vector<double> missingness_probs(Mlp& head, const Tensor& h, double eps) {
  if (eps < 0.0) throw DomainError("missingness head: negative gap " + std::to_string(eps));
  ad::Graph g;
  auto p = missingness_probs(head, g.constant(h), g.constant(Tensor::scalar(eps)));
  return p.value().values();
}

/// l_M: binary cross-entropy summed over labs, averaged over intervals then patients.
inline ad::Var missingness_loss(Mlp& head, ad::Var h_all, const PresenceRows& all) {
  ad::Graph& g = h_all.graph();
  if (!all.any_missing()) return g.constant(Tensor::scalar(0.0));
  auto [h, rows] = detail::active_rows(h_all, all, all.missing_weight);
  ad::Var p = missingness_probs(head, h, g.constant(rows.gaps));
  ad::Var o = g.constant(rows.next_mask);
  ad::Var not_o = (-o) + 1.0;
  ad::Var bce = -(o * ad::log(p) + not_o * ad::log((-p) + 1.0));
  return ad::sum(g.constant(rows.missing_weight) * ad::sum_cols(bce));
}

/// Multi-layer config for a missingness head over K labs.
inline MlpConfig missingness_config(std::size_t embedding_dim, std::size_t labs,
                                    std::vector<std::size_t> hidden, Activation act) {
  MlpConfig cfg;
  cfg.input_dim = embedding_dim + 1;
  cfg.hidden_layers = std::move(hidden);
  cfg.activation = act;
  cfg.output_dim = labs;
  cfg.output_activation = Activation::sigmoid;
  return cfg;
}

}  // namespace deepjoint
