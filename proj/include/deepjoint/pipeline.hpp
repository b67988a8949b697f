// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "deepjoint/cohort.hpp"
#include "deepjoint/random.hpp"

namespace deepjoint {

/// How a patient's record is turned into model input.
enum class Strategy { last, count, ignore, resample, gru_d, feature, deepjoint, deepjoint_i, deepjoint_m };

inline constexpr Strategy kAllStrategies[] = {Strategy::last,    Strategy::count,   Strategy::ignore,
                                              Strategy::resample, Strategy::gru_d,  Strategy::feature,
                                              Strategy::deepjoint};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::last: return "last";
    case Strategy::count: return "count";
    case Strategy::ignore: return "ignore";
    case Strategy::resample: return "resample";
    case Strategy::gru_d: return "gru_d";
    case Strategy::feature: return "feature";
    case Strategy::deepjoint: return "deepjoint";
    case Strategy::deepjoint_i: return "deepjoint_i";
    case Strategy::deepjoint_m: return "deepjoint_m";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  for (auto k : {Strategy::last, Strategy::count, Strategy::ignore, Strategy::resample, Strategy::gru_d,
                 Strategy::feature, Strategy::deepjoint, Strategy::deepjoint_i, Strategy::deepjoint_m})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

enum class InputKind { flat, sequence };

inline InputKind input_kind(Strategy s) {
  return s == Strategy::last || s == Strategy::count ? InputKind::flat : InputKind::sequence;
}

/// Width of the per-step (or flat) model input for K labs.
inline std::size_t input_width(Strategy s, std::size_t labs) {
  switch (s) {
    case Strategy::last: return labs;
    case Strategy::count: return 2 * labs;
    case Strategy::ignore:
    case Strategy::resample:
    case Strategy::gru_d: return labs;
    case Strategy::feature:
    case Strategy::deepjoint:
    case Strategy::deepjoint_i:
    case Strategy::deepjoint_m: return 2 * labs + 1;
  }
  return labs;
}

/// Normalisation and imputation statistics, always fitted on a training split.
struct TrainStatistics {
  std::vector<double> lab_mean;
  std::vector<double> lab_std;
  double gap_mean = 0.0;
  double gap_std = 1.0;
  std::string provenance;  // "<split label>:<ids digest>"

  [[nodiscard]] std::size_t labs() const noexcept { return lab_mean.size(); }
};

/// Gaps in hours per encounter; the first gap is measured from the window start.
inline std::vector<double> encounter_gaps(const EncounterSequence& s) {
  std::vector<double> gaps(s.length());
  for (std::size_t j = 0; j < s.length(); ++j) gaps[j] = j == 0 ? s.times[0] : s.times[j] - s.times[j - 1];
  return gaps;
}

inline TrainStatistics fit_statistics(const Cohort& cohort, const std::vector<std::size_t>& members,
                                      std::string_view label) {
  if (members.empty()) throw DataError("statistics: empty training split");
  const std::size_t k = cohort[members.front()].labs();
  std::vector<double> sum(k, 0.0), sq(k, 0.0), n(k, 0.0);
  double gsum = 0.0, gsq = 0.0, gn = 0.0;
  std::vector<std::string> ids;
  for (auto i : members) {
    const auto& s = cohort[i];
    ids.push_back(s.patient_id);
    for (std::size_t j = 0; j < s.length(); ++j)
      for (std::size_t c = 0; c < k; ++c)
        if (s.mask[j][c]) {
          sum[c] += s.values[j][c];
          sq[c] += s.values[j][c] * s.values[j][c];
          n[c] += 1.0;
        }
    for (double g : encounter_gaps(s)) {
      gsum += g;
      gsq += g * g;
      gn += 1.0;
    }
  }
  TrainStatistics st;
  st.lab_mean.resize(k);
  st.lab_std.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    st.lab_mean[c] = n[c] > 0 ? sum[c] / n[c] : 0.0;
    const double var = n[c] > 1 ? (sq[c] - n[c] * st.lab_mean[c] * st.lab_mean[c]) / (n[c] - 1.0) : 0.0;
    st.lab_std[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  st.gap_mean = gsum / gn;
  const double gvar = gn > 1 ? (gsq - gn * st.gap_mean * st.gap_mean) / (gn - 1.0) : 0.0;
  st.gap_std = gvar > 1e-24 ? std::sqrt(gvar) : 1.0;
  st.provenance = std::string(label) + ":" + ids_digest(ids);
  return st;
}

/// Last observation carried forward within the patient; labs never observed
/// so far take the training mean. Raw units.
inline std::vector<std::vector<double>> impute_locf(const EncounterSequence& s,
                                                    const std::vector<double>& lab_means) {
  const std::size_t k = s.labs();
  if (lab_means.size() != k) {
    throw DataError("impute: patient '" + s.patient_id + "' has " + std::to_string(k) +
                    " labs, statistics cover " + std::to_string(lab_means.size()));
  }
  std::vector<std::vector<double>> out(s.length(), std::vector<double>(k));
  std::vector<double> carry = lab_means;
  for (std::size_t j = 0; j < s.length(); ++j)
    for (std::size_t c = 0; c < k; ++c) {
      if (s.mask[j][c]) carry[c] = s.values[j][c];
      out[j][c] = carry[c];
    }
  return out;
}

/// Model-ready form of one patient.
struct PreparedPatient {
  std::string id;
  Tensor inputs;                // [T, F]; [1, F] for flat strategies
  Tensor observed;              // [L, K] raw observation mask per encounter
  std::vector<double> gaps;     // [L] hours; gaps[0] from window start
  double window_remaining = 0;  // hours from the last encounter to the window end
  SurvivalLabel label;

  [[nodiscard]] std::size_t steps() const noexcept { return inputs.rows(); }
  [[nodiscard]] std::size_t encounters() const noexcept { return gaps.size(); }
};

namespace detail {
inline double zscore(double v, const TrainStatistics& st, std::size_t c) {
  return (v - st.lab_mean[c]) / st.lab_std[c];
}
}  // namespace detail

/// Hourly grid over the window: within-hour mean of observed values, then
/// carried forward; hours before any observation take the training mean. Raw units.
inline std::vector<std::vector<double>> resample_hourly(const EncounterSequence& s,
                                                        const std::vector<double>& lab_means) {
  const std::size_t k = s.labs();
  const std::size_t slots = static_cast<std::size_t>(kWindowHours);
  std::vector<std::vector<double>> sum(slots, std::vector<double>(k, 0.0));
  std::vector<std::vector<double>> n(slots, std::vector<double>(k, 0.0));
  for (std::size_t j = 0; j < s.length(); ++j) {
    const auto slot = std::min(slots - 1, static_cast<std::size_t>(std::floor(s.times[j])));
    for (std::size_t c = 0; c < k; ++c)
      if (s.mask[j][c]) {
        sum[slot][c] += s.values[j][c];
        n[slot][c] += 1.0;
      }
  }
  std::vector<std::vector<double>> out(slots, std::vector<double>(k));
  std::vector<double> carry = lab_means;
  for (std::size_t h = 0; h < slots; ++h)
    for (std::size_t c = 0; c < k; ++c) {
      if (n[h][c] > 0) carry[c] = sum[h][c] / n[h][c];
      out[h][c] = carry[c];
    }
  return out;
}

inline PreparedPatient prepare(const EncounterSequence& s, Strategy strategy, const TrainStatistics& st) {
  const std::size_t k = s.labs();
  if (k != st.labs()) {
    throw DataError("prepare: patient '" + s.patient_id + "' has " + std::to_string(k) +
                    " labs, statistics cover " + std::to_string(st.labs()));
  }
  const std::size_t len = s.length();
  PreparedPatient p;
  p.id = s.patient_id;
  p.label = s.label;
  p.gaps = encounter_gaps(s);
  p.window_remaining = std::max(0.0, kWindowHours - s.times.back());
  p.observed = Tensor(len, k);
  for (std::size_t j = 0; j < len; ++j)
    for (std::size_t c = 0; c < k; ++c) p.observed(j, c) = s.mask[j][c];

  const auto imputed = impute_locf(s, st.lab_mean);
  switch (strategy) {
    case Strategy::last:
    case Strategy::count: {
      p.inputs = Tensor(1, input_width(strategy, k));
      for (std::size_t c = 0; c < k; ++c) p.inputs(0, c) = detail::zscore(imputed[len - 1][c], st, c);
      if (strategy == Strategy::count)
        for (std::size_t j = 0; j < len; ++j)
          for (std::size_t c = 0; c < k; ++c) p.inputs(0, k + c) += s.mask[j][c];
      break;
    }
    case Strategy::ignore:
    case Strategy::gru_d: {
      p.inputs = Tensor(len, k);
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t c = 0; c < k; ++c) p.inputs(j, c) = detail::zscore(imputed[j][c], st, c);
      break;
    }
    case Strategy::resample: {
      const auto grid = resample_hourly(s, st.lab_mean);
      p.inputs = Tensor(grid.size(), k);
      for (std::size_t h = 0; h < grid.size(); ++h)
        for (std::size_t c = 0; c < k; ++c) p.inputs(h, c) = detail::zscore(grid[h][c], st, c);
      break;
    }
    case Strategy::feature:
    case Strategy::deepjoint:
    case Strategy::deepjoint_i:
    case Strategy::deepjoint_m: {
      p.inputs = Tensor(len, 2 * k + 1);
      for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t c = 0; c < k; ++c) {
          p.inputs(j, c) = detail::zscore(imputed[j][c], st, c);
          p.inputs(j, k + c) = s.mask[j][c];
        }
        p.inputs(j, 2 * k) = (p.gaps[j] - st.gap_mean) / st.gap_std;
      }
      break;
    }
  }
  return p;
}

struct PreparedDataset {
  Strategy strategy = Strategy::feature;
  std::vector<PreparedPatient> patients;
  std::string statistics_provenance;

  [[nodiscard]] std::size_t size() const noexcept { return patients.size(); }
  [[nodiscard]] std::vector<SurvivalLabel> labels() const {
    std::vector<SurvivalLabel> out;
    out.reserve(patients.size());
    for (const auto& p : patients) out.push_back(p.label);
    return out;
  }
  [[nodiscard]] std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& p : patients) out.push_back(p.id);
    return out;
  }
};

inline PreparedDataset prepare_dataset(const Cohort& cohort, const std::vector<std::size_t>& members,
                                       Strategy strategy, const TrainStatistics& st) {
  PreparedDataset d;
  d.strategy = strategy;
  d.statistics_provenance = st.provenance;
  d.patients.reserve(members.size());
  for (auto i : members) d.patients.push_back(prepare(cohort[i], strategy, st));
  return d;
}

// Splits -----------------------------------------------------------------------

struct RandomSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

inline std::size_t rounded_share(std::size_t n, double frac) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * frac));
}

/// Patient-level split: test_frac of the cohort, then val_frac of the remainder.
inline RandomSplit split_random(std::size_t n, double test_frac, double val_frac, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0) || !(val_frac >= 0.0 && val_frac < 1.0)) {
    throw ContractError("split: fractions must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "split/random");
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = rounded_share(n, test_frac);
  const std::size_t n_val = rounded_share(n - n_test, val_frac);
  if (n_test == 0 || n_test + n_val >= n || (val_frac > 0.0 && n_val == 0)) {
    throw DataError("split: cohort of " + std::to_string(n) + " patients is too small for every split");
  }
  RandomSplit s;
  s.test.assign(order.begin(), order.begin() + static_cast<long>(n_test));
  s.val.assign(order.begin() + static_cast<long>(n_test), order.begin() + static_cast<long>(n_test + n_val));
  s.train.assign(order.begin() + static_cast<long>(n_test + n_val), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// Carves val_frac of a training index set off for early stopping.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> hold_out(
    const std::vector<std::size_t>& train, double val_frac, std::uint64_t seed, std::string_view label) {
  std::vector<std::size_t> order = train;
  Rng rng = make_rng(seed, label);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = rounded_share(order.size(), val_frac);
  if (n_val == 0 || n_val >= order.size()) {
    throw DataError("hold-out: " + std::to_string(order.size()) + " patients cannot provide a validation set");
  }
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> rest(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(rest.begin(), rest.end());
  return {rest, val};
}

struct RegimeSplit {
  std::vector<std::size_t> train_a;  // subsampled when regime A is the larger one
  std::vector<std::size_t> test_a;
  std::vector<std::size_t> train_b;  // subsampled when regime B is the larger one
  std::vector<std::size_t> test_b;
  std::vector<std::size_t> train_a_full;
  std::vector<std::size_t> train_b_full;
};

/// Splits regimes A and B into train/test independently, then subsamples the
/// larger training set without replacement to the size of the smaller one.
inline RegimeSplit split_regime_matched(const Cohort& cohort, std::uint64_t seed, double test_frac = 0.2) {
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (cohort[i].regime == "A") a.push_back(i);
    else if (cohort[i].regime == "B") b.push_back(i);
    else throw DataError("regime split: patient '" + cohort[i].patient_id + "' has regime '" +
                         cohort[i].regime + "', expected A or B");
  }
  if (a.empty() || b.empty()) throw DataError("regime split: both regimes must be non-empty");
  auto split_one = [&](std::vector<std::size_t> members, std::string_view label) {
    Rng rng = make_rng(seed, label);
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_test = rounded_share(members.size(), test_frac);
    if (n_test == 0) throw DataError("regime split: regime " + std::string(label) + " has no test patients");
    if (n_test >= members.size()) throw DataError("regime split: regime " + std::string(label) + " has no training patients");
    std::vector<std::size_t> test(members.begin(), members.begin() + static_cast<long>(n_test));
    std::vector<std::size_t> train(members.begin() + static_cast<long>(n_test), members.end());
    return std::make_pair(train, test);
  };
  RegimeSplit r;
  std::tie(r.train_a_full, r.test_a) = split_one(a, "split/regime/A");
  std::tie(r.train_b_full, r.test_b) = split_one(b, "split/regime/B");
  r.train_a = r.train_a_full;
  r.train_b = r.train_b_full;
  auto& larger = r.train_a.size() > r.train_b.size() ? r.train_a : r.train_b;
  const std::size_t target = std::min(r.train_a.size(), r.train_b.size());
  if (larger.size() > target) {
    Rng rng = make_rng(seed, "split/regime/subsample");
    std::shuffle(larger.begin(), larger.end(), rng);
    larger.resize(target);
  }
  for (auto* v : {&r.train_a, &r.test_a, &r.train_b, &r.test_b, &r.train_a_full, &r.train_b_full})
    std::sort(v->begin(), v->end());
  return r;
}

}  // namespace deepjoint
