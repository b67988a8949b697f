// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "deepjoint/random.hpp"
#include "deepjoint/survival.hpp"

namespace deepjoint {

/// Anything that can report S(t) for patient i.
template <class C>
concept SurvivalCurves = requires(const C& c, std::size_t i, double t) {
  { c.survival(i, t) } -> std::convertible_to<double>;
  { c.size() } -> std::convertible_to<std::size_t>;
};

/// Curves restricted to (and reordered by) an index set; used by the bootstrap.
template <SurvivalCurves C>
struct IndexedCurves {
  const C* base;
  const std::vector<std::size_t>* index;
  [[nodiscard]] std::size_t size() const { return index->size(); }
  [[nodiscard]] double survival(std::size_t i, double t) const { return base->survival((*index)[i], t); }
};

namespace detail {
inline double pair_score(double risk_i, double risk_j) {
  if (risk_i > risk_j) return 1.0;
  if (risk_i == risk_j) return 0.5;
  return 0.0;
}
}  // namespace detail

/// Truncated concordance at a horizon: over pairs with t_i < t_j, d_i = 1 and
/// t_i <= horizon, the share where patient i has the higher risk (ties 1/2).
/// risk is typically 1 - S(horizon | patient).
inline double cindex_td(std::span<const double> risk, std::span<const SurvivalLabel> labels, double horizon) {
  if (risk.size() != labels.size()) throw ShapeError("cindex: risks and labels differ in length");
  if (!(horizon > 0.0)) throw DomainError("cindex: horizon must be positive");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].event || labels[i].time > horizon) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (!(labels[i].time < labels[j].time)) continue;
      den += 1.0;
      num += detail::pair_score(risk[i], risk[j]);
    }
  }
  if (den == 0.0) throw ContractError("cindex: no comparable pairs");
  return num / den;
}

/// Concordance aggregated over event times: each comparable pair is scored
/// with risks 1 - S(t_i | .) at the earlier patient's event time.
template <SurvivalCurves C>
double cindex_integrated(const C& curves, std::span<const SurvivalLabel> labels, double max_horizon) {
  if (curves.size() != labels.size()) throw ShapeError("cindex: curves and labels differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].event || labels[i].time > max_horizon) continue;
    const double ti = labels[i].time;
    const double risk_i = 1.0 - curves.survival(i, ti);
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (!(ti < labels[j].time)) continue;
      den += 1.0;
      num += detail::pair_score(risk_i, 1.0 - curves.survival(j, ti));
    }
  }
  if (den == 0.0) throw ContractError("cindex: no comparable pairs");
  return num / den;
}

/// Kaplan-Meier estimate of the censoring survival G(t) = P(C > t).
struct CensoringDistribution {
  std::vector<double> times;     // distinct censoring times
  std::vector<double> survival;  // G just after each time

  [[nodiscard]] double at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 1.0 : survival[static_cast<std::size_t>(it - times.begin()) - 1];
  }
  /// Left limit G(t-).
  [[nodiscard]] double before(double t) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 1.0 : survival[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

inline CensoringDistribution fit_censoring(std::span<const SurvivalLabel> labels) {
  std::vector<double> t;
  for (const auto& l : labels) t.push_back(l.time);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
  CensoringDistribution g;
  double s = 1.0;
  std::size_t at_risk = labels.size();
  for (std::size_t k = 0; k < order.size();) {
    const double tk = t[order[k]];
    std::size_t end = k;
    double censored = 0.0;
    while (end < order.size() && t[order[end]] == tk) {
      censored += labels[order[end]].event ? 0.0 : 1.0;
      ++end;
    }
    if (censored > 0.0) {
      s *= 1.0 - censored / static_cast<double>(at_risk);
      g.times.push_back(tk);
      g.survival.push_back(s);
    }
    at_risk -= end - k;
    k = end;
  }
  return g;
}

/// IPCW (Graf) Brier score at a horizon.
template <SurvivalCurves C>
double brier(const C& curves, std::span<const SurvivalLabel> labels, double horizon,
             const CensoringDistribution& censoring) {
  if (curves.size() != labels.size()) throw ShapeError("brier: curves and labels differ in length");
  if (labels.empty()) throw ContractError("brier: empty cohort");
  const double g_horizon = censoring.at(horizon);
  if (!(g_horizon > 0.0)) throw DomainError("brier: censoring survival is zero at the horizon");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double s = curves.survival(i, horizon);
    if (labels[i].time <= horizon && labels[i].event) {
      total += s * s / censoring.before(labels[i].time);
    } else if (labels[i].time > horizon) {
      total += (1.0 - s) * (1.0 - s) / g_horizon;
    }
  }
  return total / static_cast<double>(labels.size());
}

template <SurvivalCurves C>
double brier(const C& curves, std::span<const SurvivalLabel> labels, double horizon) {
  return brier(curves, labels, horizon, fit_censoring(labels));
}

struct MetricSummary {
  double point = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

struct BootstrapResult {
  std::vector<MetricSummary> metrics;
  std::size_t iterations = 0;
  std::size_t replaced = 0;  // degenerate resamples that were redrawn
};

/// Resamples patients with replacement and recomputes every metric; the
/// predictions themselves are never refitted. metric_fn maps an index set to
/// one value per metric and throws ContractError on degenerate resamples.
inline BootstrapResult bootstrap(
    const std::function<std::vector<double>(const std::vector<std::size_t>&)>& metric_fn, std::size_t n,
    std::size_t iters, std::uint64_t seed) {
  if (iters < 2) throw ContractError("bootstrap: at least two iterations are required");
  if (n == 0) throw ContractError("bootstrap: empty cohort");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const auto point = metric_fn(all);

  BootstrapResult out;
  out.iterations = iters;
  std::vector<std::vector<double>> samples(point.size());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t it = 0; it < iters; ++it) {
    Rng rng(derive_seed(seed, "bootstrap", it));
    std::vector<double> values;
    for (int attempt = 0;; ++attempt) {
      std::vector<std::size_t> idx(n);
      for (auto& v : idx) v = pick(rng);
      try {
        values = metric_fn(idx);
        break;
      } catch (const ContractError&) {
        if (attempt >= 10) throw;
        ++out.replaced;
      }
    }
    for (std::size_t m = 0; m < values.size(); ++m) samples[m].push_back(values[m]);
  }
  for (std::size_t m = 0; m < point.size(); ++m) {
    MetricSummary s;
    s.point = point[m];
    const auto& xs = samples[m];
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(var / static_cast<double>(xs.size() - 1));
    out.metrics.push_back(s);
  }
  return out;
}

/// A metric value tagged with the identity of the test set it was computed on.
struct TaggedMetric {
  double value = 0.0;
  std::string test_set;
};

/// |internal - transferred|; both must come from the same test set.
inline double transfer_loss(const TaggedMetric& internal, const TaggedMetric& transferred) {
  if (internal.test_set != transferred.test_set) {
    throw ContractError("transfer loss: metrics come from different test sets (" + internal.test_set +
                        " vs " + transferred.test_set + ")");
  }
  return std::abs(internal.value - transferred.value);
}

/// Per-horizon and integrated discrimination and calibration with bootstrap spread.
struct EvaluationReport {
  std::vector<double> horizons;
  std::vector<MetricSummary> cindex;  // one per horizon
  std::vector<MetricSummary> brier;   // one per horizon
  MetricSummary integrated_cindex;
  std::size_t bootstrap = 0;
  std::string test_set;
};

template <SurvivalCurves C>
EvaluationReport evaluate_curves(const C& curves, const std::vector<SurvivalLabel>& labels,
                                 const std::vector<double>& horizons, std::size_t iters, std::uint64_t seed) {
  if (horizons.empty()) throw ContractError("evaluate: no horizons");
  double max_time = 0.0;
  for (const auto& l : labels) max_time = std::max(max_time, l.time);
  for (double h : horizons) {
    if (!(h > 0.0) || h > max_time) {
      throw DataError("evaluate: horizon " + std::to_string(h) + " days is outside the follow-up support (0, " +
                      std::to_string(max_time) + "]");
    }
  }
  const double max_horizon = *std::max_element(horizons.begin(), horizons.end());
  auto metric_fn = [&](const std::vector<std::size_t>& idx) {
    IndexedCurves<C> sub{&curves, &idx};
    std::vector<SurvivalLabel> lab;
    lab.reserve(idx.size());
    for (auto i : idx) lab.push_back(labels[i]);
    const auto censoring = fit_censoring(lab);
    std::vector<double> out;
    std::vector<double> risk(idx.size());
    for (double h : horizons) {
      for (std::size_t k = 0; k < idx.size(); ++k) risk[k] = 1.0 - sub.survival(k, h);
      out.push_back(cindex_td(risk, lab, h));
      double b;
      try {
        b = brier(sub, lab, h, censoring);
      } catch (const DomainError& e) {
        throw ContractError(e.what());
      }
      out.push_back(b);
    }
    out.push_back(cindex_integrated(sub, lab, max_horizon));
    return out;
  };
  const auto boot = bootstrap(metric_fn, labels.size(), iters, seed);
  EvaluationReport r;
  r.horizons = horizons;
  r.bootstrap = iters;
  for (std::size_t k = 0; k < horizons.size(); ++k) {
    r.cindex.push_back(boot.metrics[2 * k]);
    r.brier.push_back(boot.metrics[2 * k + 1]);
  }
  r.integrated_cindex = boot.metrics.back();
  return r;
}

}  // namespace deepjoint
