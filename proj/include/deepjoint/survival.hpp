// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "deepjoint/autodiff.hpp"
#include "deepjoint/layers.hpp"

namespace deepjoint {

/// Time to event in days from the end of the observation window.
struct SurvivalLabel {
  double time = 1.0;
  bool event = false;

  void validate() const {
    if (!(time > 0.0) || !std::isfinite(time)) {
      throw DataError("survival label: time must be positive, got " + std::to_string(time));
    }
  }
};

inline std::size_t count_events(std::span<const SurvivalLabel> labels) {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.event; }));
}

/// eta = S(h): the log-hazard shift of one embedding.
inline double log_hazard(Mlp& survival_net, const Tensor& h) {
  ad::Graph g;
  return survival_net.forward(g, g.constant(h)).value().item();
}

/// Mean Cox partial log-likelihood over events, risk sets t_j >= t_i (Breslow ties).
/// eta is [B, 1]. The result is the log-likelihood; negate it for a loss.
inline ad::Var cox_partial_loglik(ad::Var eta, std::span<const SurvivalLabel> labels) {
  const std::size_t n = labels.size();
  if (eta.cols() != 1 || eta.rows() != n) {
    throw ShapeError("cox: " + eta.value().shape_string() + " log-hazards for " +
                     std::to_string(n) + " labels");
  }
  const std::size_t events = count_events(labels);
  if (events == 0) throw ContractError("cox: partial likelihood undefined without events");

  ad::Graph& g = eta.graph();
  Tensor risk(n, n);
  Tensor died(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    died(i, 0) = labels[i].event ? 1.0 : 0.0;
    if (!labels[i].event) continue;
    for (std::size_t j = 0; j < n; ++j) risk(i, j) = labels[j].time >= labels[i].time ? 1.0 : 0.0;
  }
  const auto& ev = eta.value().data();
  const double shift = *std::max_element(ev.begin(), ev.end());
  ad::Var centred = eta + (-shift);
  // Censored rows have empty risk sets; give them a unit denominator and weight zero.
  Tensor pad(n, 1);
  for (std::size_t i = 0; i < n; ++i) pad(i, 0) = labels[i].event ? 0.0 : 1.0;
  ad::Var denom = ad::matmul(g.constant(std::move(risk)), ad::exp(centred)) + g.constant(std::move(pad));
  ad::Var terms = centred - ad::log(denom);
  return (1.0 / static_cast<double>(events)) * ad::sum(g.constant(std::move(died)) * terms);
}

inline double cox_partial_loglik(std::span<const double> eta, std::span<const SurvivalLabel> labels) {
  ad::Graph g;
  ad::Var e = g.constant(Tensor::column(std::vector<double>(eta.begin(), eta.end())));
  return cox_partial_loglik(e, labels).value().item();
}

/// Cumulative baseline hazard as a right-continuous step function.
struct BreslowTable {
  std::vector<double> event_times;
  std::vector<double> cumulative_baseline;

  /// Lambda_0(t); zero before the first event time.
  [[nodiscard]] double at(double t) const {
    const auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
    if (it == event_times.begin()) return 0.0;
    return cumulative_baseline[static_cast<std::size_t>(it - event_times.begin()) - 1];
  }
};

inline BreslowTable breslow_fit(std::span<const double> eta, std::span<const SurvivalLabel> labels) {
  if (labels.empty()) throw ContractError("breslow: empty input");
  if (eta.size() != labels.size()) throw ShapeError("breslow: eta and labels differ in length");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return labels[a].time < labels[b].time; });

  // Suffix sums of exp(eta) give each risk set {j : t_j >= t}.
  std::vector<double> at_risk(order.size() + 1, 0.0);
  for (std::size_t k = order.size(); k-- > 0;) at_risk[k] = at_risk[k + 1] + std::exp(eta[order[k]]);

  BreslowTable table;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = labels[order[k]].time;
    std::size_t end = k;
    double deaths = 0.0;
    while (end < order.size() && labels[order[end]].time == t) {
      deaths += labels[order[end]].event ? 1.0 : 0.0;
      ++end;
    }
    if (deaths > 0.0) {
      cumulative += deaths / at_risk[k];
      table.event_times.push_back(t);
      table.cumulative_baseline.push_back(cumulative);
    }
    k = end;
  }
  return table;
}

/// S(t | eta) = exp(-Lambda_0(t) exp(eta)).
inline double predict_survival(const BreslowTable& table, double eta, double t) {
  if (t < 0.0) throw DomainError("predict_survival: negative horizon " + std::to_string(t));
  const double base = table.at(t);
  if (base == 0.0) return 1.0;
  return std::exp(-base * std::exp(eta));
}

/// Survival curves of a cohort under one Breslow baseline.
struct BreslowCurves {
  const BreslowTable* table = nullptr;
  std::vector<double> eta;

  [[nodiscard]] std::size_t size() const noexcept { return eta.size(); }
  [[nodiscard]] double survival(std::size_t i, double t) const {
    return predict_survival(*table, eta[i], t);
  }
};

}  // namespace deepjoint
