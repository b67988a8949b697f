// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Nothing here calls into the code under test except to
// read parameter storage.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "deepjoint/autodiff.hpp"
#include "deepjoint/random.hpp"
#include "deepjoint/survival.hpp"

namespace oracle {

using deepjoint::SurvivalLabel;
using deepjoint::Tensor;

// Finite differences ------------------------------------------------------------

/// Relative error with a denominator floor so near-zero gradients compare
/// on an absolute scale of kFloor.
inline constexpr double kFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

using LossFn = std::function<deepjoint::ad::Var(deepjoint::ad::Graph&)>;

/// Central differences over every entry of every parameter; returns the
/// largest relative error against reverse-mode gradients.
inline double max_gradient_error(const std::vector<deepjoint::ad::Parameter*>& params, const LossFn& loss,
                                 double step = 1e-5) {
  deepjoint::ad::Gradients grads;
  {
    deepjoint::ad::Graph g;
    grads = g.backward(loss(g));
  }
  auto value = [&] {
    deepjoint::ad::Graph g;
    return loss(g).value().item();
  };
  double worst = 0.0;
  for (auto* p : params) {
    const auto it = grads.find(p->id);
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double saved = p->value[k];
      p->value[k] = saved + step;
      const double up = value();
      p->value[k] = saved - step;
      const double down = value();
      p->value[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = it == grads.end() ? 0.0 : it->second[k];
      worst = std::max(worst, relative_error(analytic, numeric));
    }
  }
  return worst;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, deepjoint::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Survival ---------------------------------------------------------------------

/// Mean over events of eta_i - log sum_{j: t_j >= t_i} exp(eta_j).
inline double cox_loglik(const std::vector<double>& eta, const std::vector<SurvivalLabel>& labels) {
  double total = 0.0;
  int events = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].event) continue;
    ++events;
    long double risk = 0.0L;
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels[j].time >= labels[i].time) risk += std::exp(static_cast<long double>(eta[j]));
    total += eta[i] - static_cast<double>(std::log(risk));
  }
  return total / events;
}

/// Breslow increments d(t) / sum_{j: t_j >= t} exp(eta_j) at each distinct event time.
inline std::map<double, double> breslow(const std::vector<double>& eta, const std::vector<SurvivalLabel>& labels) {
  std::set<double> times;
  for (const auto& l : labels)
    if (l.event) times.insert(l.time);
  std::map<double, double> out;
  double cumulative = 0.0;
  for (double t : times) {
    double deaths = 0.0, risk = 0.0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j].event && labels[j].time == t) deaths += 1.0;
      if (labels[j].time >= t) risk += std::exp(eta[j]);
    }
    cumulative += deaths / risk;
    out[t] = cumulative;
  }
  return out;
}

// Metrics ------------------------------------------------------------------------

using Curve = std::function<double(std::size_t, double)>;

/// Pair enumeration: comparable (i, j) have d_i = 1, t_i <= horizon, t_i < t_j.
inline double cindex(const std::vector<double>& risk, const std::vector<SurvivalLabel>& labels, double horizon) {
  double concordant = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i == j || !labels[i].event || labels[i].time > horizon || !(labels[i].time < labels[j].time)) continue;
      pairs += 1.0;
      concordant += risk[i] > risk[j] ? 1.0 : risk[i] == risk[j] ? 0.5 : 0.0;
    }
  return concordant / pairs;
}

/// Pair enumeration with risks read off the curves at the earlier event time.
inline double integrated_cindex(const Curve& s, const std::vector<SurvivalLabel>& labels, double max_horizon) {
  double concordant = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i == j || !labels[i].event || labels[i].time > max_horizon || !(labels[i].time < labels[j].time)) continue;
      pairs += 1.0;
      const double ri = 1.0 - s(i, labels[i].time), rj = 1.0 - s(j, labels[i].time);
      concordant += ri > rj ? 1.0 : ri == rj ? 0.5 : 0.0;
    }
  return concordant / pairs;
}

/// Kaplan-Meier of the censoring indicator, evaluated by direct product:
/// G(t) = prod over censoring times c <= t of (1 - censored(c) / at_risk(c)).
inline double censoring_survival(const std::vector<SurvivalLabel>& labels, double t, bool strictly_before) {
  std::set<double> times;
  for (const auto& l : labels)
    if (!l.event) times.insert(l.time);
  double g = 1.0;
  for (double c : times) {
    if (strictly_before ? !(c < t) : !(c <= t)) break;
    double censored = 0.0, at_risk = 0.0;
    for (const auto& l : labels) {
      if (l.time >= c) at_risk += 1.0;
      if (!l.event && l.time == c) censored += 1.0;
    }
    g *= 1.0 - censored / at_risk;
  }
  return g;
}

/// Graf weights: events by the horizon weigh 1/G(t_i-), survivors 1/G(h), others 0.
inline double brier(const Curve& s, const std::vector<SurvivalLabel>& labels, double horizon) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = s(i, horizon);
    if (labels[i].event && labels[i].time <= horizon)
      total += (0.0 - p) * (0.0 - p) / censoring_survival(labels, labels[i].time, true);
    else if (labels[i].time > horizon)
      total += (1.0 - p) * (1.0 - p) / censoring_survival(labels, horizon, false);
  }
  return total / static_cast<double>(labels.size());
}

/// Random cohort with tied times drawn from a small integer grid.
inline std::vector<SurvivalLabel> random_labels(std::size_t n, deepjoint::Rng& rng, int grid = 6) {
  std::uniform_int_distribution<int> t(1, grid);
  std::bernoulli_distribution e(0.6);
  std::vector<SurvivalLabel> out(n);
  for (auto& l : out) {
    l.time = static_cast<double>(t(rng));
    l.event = e(rng);
  }
  out[0].event = true;  // at least one event
  return out;
}

// Statistics ------------------------------------------------------------------------

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value
/// (Kolmogorov series with the Stephens small-sample correction).
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return {d, std::clamp(p, 0.0, 1.0)};
}

inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto p, auto q) { return x[p] < x[q]; });
  std::vector<double> rank(x.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end < order.size() && x[order[end]] == x[order[k]]) ++end;
    const double r = 0.5 * static_cast<double>(k + end - 1) + 1.0;
    for (std::size_t m = k; m < end; ++m) rank[order[m]] = r;
    k = end;
  }
  return rank;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

}  // namespace oracle
