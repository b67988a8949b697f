// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic cohorts with informative clinical presence. A latent health
// process z(t) drives the encounter intensity, which labs are ordered, the
// lab values and the outcome. Regime B differs from A only in the
// observation parameters (base rate and per-lab order logits).
//
// Each patient draws from independent random streams keyed by purpose, so a
// patient generated under A and under B shares its latent path, value noise
// and survival/censoring draws; only encounter times and masks move.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepjoint/cohort.hpp"
#include "deepjoint/metrics.hpp"
#include "deepjoint/random.hpp"

namespace deepjoint {

inline constexpr int kTruthFormatVersion = 1;

struct GeneratorConfig {
  std::size_t n_patients = 4000;    // total over both regimes
  double regime_b_fraction = 0.5;
  std::size_t labs = 6;
  std::size_t latent_dim = 2;
  double ou_theta = 0.05;           // mean reversion per hour
  double grid_step = 0.25;          // hours between latent grid points
  double rho = 0.3;                 // base encounters per hour
  double kappa = 0.7;               // gain of severity on presence
  std::vector<double> beta = {1.5, 1.0, 0.5, 0.0, -0.5, -1.0};  // per-lab order logits
  double shift_rho = -0.15;         // regime B: rho + shift_rho
  std::vector<double> shift_beta = {-1.0};  // regime B: beta + shift_beta (one value broadcasts)
  double noise_std = 0.5;
  std::vector<double> risk_weights = {1.0, 0.5};  // risk = w . z(24h)
  double weibull_scale = 40.0;      // days
  double weibull_shape = 1.2;
  double censoring_rate = 0.4;      // target share censored before the event
  double max_follow_up = 90.0;      // days; administrative censoring
  bool deterministic_survival = false;  // event time fixed by risk (no Weibull noise)
  std::uint64_t seed = 1;

  [[nodiscard]] std::vector<double> beta_for(const std::string& regime) const {
    std::vector<double> b = beta;
    if (regime == "B")
      for (std::size_t k = 0; k < b.size(); ++k) b[k] += shift_beta.size() == 1 ? shift_beta[0] : shift_beta[k];
    return b;
  }
  [[nodiscard]] double rho_for(const std::string& regime) const { return regime == "B" ? rho + shift_rho : rho; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("generator: " + m); };
    if (n_patients == 0) fail("n_patients must be positive");
    if (!(regime_b_fraction >= 0.0 && regime_b_fraction <= 1.0)) fail("regime_b_fraction must lie in [0, 1]");
    if (labs == 0 || latent_dim == 0) fail("labs and latent_dim must be positive");
    if (beta.size() != labs) fail("beta must have one logit per lab (" + std::to_string(labs) + ")");
    if (shift_beta.size() != 1 && shift_beta.size() != labs) fail("shift_beta must have 1 or K entries");
    if (risk_weights.size() != latent_dim) fail("risk_weights must have latent_dim entries");
    if (!(ou_theta > 0.0) || !(grid_step > 0.0)) fail("ou_theta and grid_step must be positive");
    if (!(noise_std >= 0.0)) fail("noise_std must be non-negative");
    if (!(weibull_scale > 0.0) || !(weibull_shape > 0.0)) fail("Weibull scale and shape must be positive");
    if (!(censoring_rate >= 0.0 && censoring_rate < 1.0)) fail("censoring_rate must lie in [0, 1)");
    if (!(max_follow_up > 0.0)) fail("max_follow_up must be positive");
    for (const char* r : {"A", "B"}) {
      const double rate = rho_for(r);
      if (!(rate > 0.0)) fail(std::string("regime ") + r + " base rate must be positive");
      if (rate * kWindowHours < 1.0) {
        fail(std::string("regime ") + r + " expects " + std::to_string(rate * kWindowHours) +
             " encounters per window; raise rho (or shift_rho) so rho * 24 >= 1");
      }
    }
  }
};

struct PatientTruth {
  std::string patient_id;
  std::vector<std::vector<double>> latent;  // [grid point][latent_dim]
  double risk = 0.0;
  std::vector<double> intensity;            // presence intensity at each encounter (per hour)
  double event_time = 0.0;                  // uncensored, days
  double censoring_time = 0.0;              // days
};

using GroundTruth = std::vector<PatientTruth>;

struct SyntheticCohort {
  Cohort cohort;
  GroundTruth truth;
};

namespace synth_detail {

// Fixed per-lab structure shared by every patient and regime.
struct LabStructure {
  std::vector<std::vector<double>> loading;  // [K][latent_dim]
  std::vector<double> offset;
  std::vector<double> scale;
};

inline LabStructure lab_structure(const GeneratorConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "synth/structure");
  LabStructure s;
  for (std::size_t k = 0; k < cfg.labs; ++k) {
    std::vector<double> row(cfg.latent_dim);
    for (auto& v : row) v = 0.3 * standard_normal(rng);
    row[k % cfg.latent_dim] += 1.0;
    s.loading.push_back(row);
    s.offset.push_back(10.0 * static_cast<double>(k + 1));
    s.scale.push_back(1.0 + 0.5 * static_cast<double>(k));
  }
  return s;
}

inline std::vector<std::vector<double>> latent_path(const GeneratorConfig& cfg, std::size_t index) {
  Rng rng(derive_seed(cfg.seed, "synth/latent", index));
  const auto points = static_cast<std::size_t>(std::ceil(kWindowHours / cfg.grid_step)) + 1;
  const double decay = std::exp(-cfg.ou_theta * cfg.grid_step);
  const double step_sd = std::sqrt(1.0 - decay * decay);
  std::vector<std::vector<double>> z(points, std::vector<double>(cfg.latent_dim));
  for (auto& v : z[0]) v = standard_normal(rng);  // stationary start, unit variance
  for (std::size_t t = 1; t < points; ++t)
    for (std::size_t d = 0; d < cfg.latent_dim; ++d) z[t][d] = decay * z[t - 1][d] + step_sd * standard_normal(rng);
  return z;
}

inline std::vector<double> latent_at(const GeneratorConfig& cfg, const std::vector<std::vector<double>>& z,
                                     double t) {
  const double pos = std::clamp(t / cfg.grid_step, 0.0, static_cast<double>(z.size() - 1));
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, z.size() - 1);
  const double w = pos - static_cast<double>(lo);
  std::vector<double> out(z[lo].size());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = (1.0 - w) * z[lo][d] + w * z[hi][d];
  return out;
}

inline double risk_score(const GeneratorConfig& cfg, const std::vector<std::vector<double>>& z) {
  const auto& end = latent_at(cfg, z, kWindowHours);
  double r = 0.0;
  for (std::size_t d = 0; d < cfg.latent_dim; ++d) r += cfg.risk_weights[d] * end[d];
  return r;
}

inline double intensity_at(const GeneratorConfig& cfg, const std::string& regime, double severity) {
  return cfg.rho_for(regime) * std::exp(cfg.kappa * severity);
}

// Uncensored event time in days: S(t) = exp(-(t/scale)^shape * exp(risk)).
inline double event_time(const GeneratorConfig& cfg, std::size_t index, double risk) {
  Rng rng(derive_seed(cfg.seed, "synth/survival", index));
  const double e = cfg.deterministic_survival ? 1.0 : std::exponential_distribution<double>(1.0)(rng);
  return std::max(1e-3, cfg.weibull_scale * std::pow(e * std::exp(-risk), 1.0 / cfg.weibull_shape));
}

// Exponential censoring rate giving the target expected censored share.
inline double calibrate_censoring(const std::vector<double>& event_times, double target, double max_follow_up) {
  if (target <= 0.0) return 0.0;
  auto censored_share = [&](double rate) {
    double s = 0.0;
    for (double t : event_times) s += t >= max_follow_up ? 1.0 : 1.0 - std::exp(-rate * t);
    return s / static_cast<double>(event_times.size());
  };
  double lo = 0.0, hi = 1.0;
  while (censored_share(hi) < target && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (censored_share(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace synth_detail

inline std::string synthetic_patient_id(std::size_t index) {
  std::ostringstream os;
  os << 'p' << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

/// One patient with a given censoring rate (per day). Independent of every other patient.
inline std::pair<EncounterSequence, PatientTruth> generate_patient(const GeneratorConfig& cfg, std::size_t index,
                                                                   const std::string& regime,
                                                                   double censoring_per_day) {
  using namespace synth_detail;
  const auto structure = lab_structure(cfg);
  EncounterSequence seq;
  PatientTruth truth;
  seq.patient_id = truth.patient_id = synthetic_patient_id(index);
  seq.regime = regime;
  truth.latent = latent_path(cfg, index);
  truth.risk = risk_score(cfg, truth.latent);

  // Encounter times by thinning a homogeneous process at the path's peak intensity.
  double peak_severity = -1e300;
  for (const auto& p : truth.latent) peak_severity = std::max(peak_severity, p[0]);
  const double bound = intensity_at(cfg, regime, peak_severity);
  Rng obs(derive_seed(cfg.seed, "synth/observation/" + regime, index));
  std::exponential_distribution<double> wait(bound);
  for (int attempt = 0; seq.times.empty(); ++attempt) {
    if (attempt > 10000) throw ConfigError("generator: could not draw an encounter; raise rho");
    for (double t = wait(obs); t <= kWindowHours; t += wait(obs)) {
      const double lam = intensity_at(cfg, regime, latent_at(cfg, truth.latent, t)[0]);
      if (uniform01(obs) * bound <= lam && (seq.times.empty() || t > seq.times.back())) {
        seq.times.push_back(t);
        truth.intensity.push_back(lam);
      }
    }
  }

  Rng masks(derive_seed(cfg.seed, "synth/masks/" + regime, index));
  Rng noise(derive_seed(cfg.seed, "synth/noise", index));
  const auto beta = cfg.beta_for(regime);
  for (double t : seq.times) {
    const auto z = latent_at(cfg, truth.latent, t);
    std::vector<double> p(cfg.labs);
    std::vector<std::uint8_t> m(cfg.labs, 0);
    bool any = false;
    for (std::size_t k = 0; k < cfg.labs; ++k) {
      p[k] = ad::sigmoid(beta[k] + cfg.kappa * z[0]);
      m[k] = uniform01(masks) < p[k] ? 1 : 0;
      any = any || m[k];
    }
    // An encounter always records at least one lab: the most likely one.
    if (!any) m[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())] = 1;
    std::vector<double> v(cfg.labs, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < cfg.labs; ++k) {
      double lin = 0.0;
      for (std::size_t d = 0; d < cfg.latent_dim; ++d) lin += structure.loading[k][d] * z[d];
      const double x = structure.offset[k] + structure.scale[k] * (lin + cfg.noise_std * standard_normal(noise));
      if (m[k]) v[k] = x;
    }
    seq.values.push_back(std::move(v));
    seq.mask.push_back(std::move(m));
  }

  truth.event_time = event_time(cfg, index, truth.risk);
  Rng cens(derive_seed(cfg.seed, "synth/censoring", index));
  truth.censoring_time = censoring_per_day > 0.0
                             ? std::exponential_distribution<double>(censoring_per_day)(cens)
                             : std::numeric_limits<double>::infinity();
  const double stop = std::min({truth.event_time, truth.censoring_time, cfg.max_follow_up});
  seq.label.time = std::max(1e-3, stop);
  seq.label.event = truth.event_time <= truth.censoring_time && truth.event_time <= cfg.max_follow_up;
  return {std::move(seq), std::move(truth)};
}

inline std::string regime_of(const GeneratorConfig& cfg, std::size_t index) {
  const auto n_b = static_cast<std::size_t>(std::llround(cfg.regime_b_fraction * static_cast<double>(cfg.n_patients)));
  return index < cfg.n_patients - n_b ? "A" : "B";
}

inline SyntheticCohort generate(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<double> times(cfg.n_patients);
  for (std::size_t i = 0; i < cfg.n_patients; ++i)
    times[i] = synth_detail::event_time(cfg, i, synth_detail::risk_score(cfg, synth_detail::latent_path(cfg, i)));
  const double rate = synth_detail::calibrate_censoring(times, cfg.censoring_rate, cfg.max_follow_up);
  SyntheticCohort out;
  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    auto [seq, truth] = generate_patient(cfg, i, regime_of(cfg, i), rate);
    out.cohort.push_back(std::move(seq));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

/// Concordance of the true risk score at a horizon: a ceiling for any model.
inline double oracle_cindex(const Cohort& cohort, const GroundTruth& truth, double horizon) {
  if (truth.size() != cohort.size()) throw DataError("oracle: ground truth does not cover the cohort");
  std::vector<double> risk;
  std::vector<SurvivalLabel> labels;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (truth[i].patient_id != cohort[i].patient_id) {
      throw DataError("oracle: ground truth for '" + truth[i].patient_id + "' does not match patient '" +
                      cohort[i].patient_id + "'");
    }
    risk.push_back(truth[i].risk);
    labels.push_back(cohort[i].label);
  }
  return cindex_td(risk, labels, horizon);
}

inline nlohmann::json to_json(const PatientTruth& t) {
  return {{"format_version", kTruthFormatVersion}, {"patient_id", t.patient_id}, {"risk", t.risk},
          {"latent", t.latent},  {"intensity", t.intensity}, {"event_time", t.event_time},
          {"censoring_time", std::isfinite(t.censoring_time) ? nlohmann::json(t.censoring_time) : nlohmann::json()}};
}

inline void write_truth(std::ostream& out, const GroundTruth& truth) {
  for (const auto& t : truth) out << to_json(t).dump() << '\n';
}

inline GroundTruth read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground-truth file '" + path + "'");
  GroundTruth out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.value("format_version", kTruthFormatVersion) != kTruthFormatVersion)
        throw DataError("unsupported format_version");
      PatientTruth t;
      t.patient_id = j.at("patient_id").get<std::string>();
      t.risk = j.at("risk").get<double>();
      t.latent = j.at("latent").get<std::vector<std::vector<double>>>();
      t.intensity = j.at("intensity").get<std::vector<double>>();
      t.event_time = j.at("event_time").get<double>();
      t.censoring_time = j.at("censoring_time").is_null() ? std::numeric_limits<double>::infinity()
                                                          : j.at("censoring_time").get<double>();
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw DataError("ground truth line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Per-regime presence summary printed by the generate command.
struct RegimeSummary {
  std::size_t patients = 0;
  double mean_encounters = 0.0;
  double mean_gap = 0.0;      // hours between consecutive encounters
  double observed_share = 0.0;
  double event_share = 0.0;
};

inline RegimeSummary summarize(const Cohort& cohort, const std::string& regime) {
  RegimeSummary s;
  double gaps = 0.0, n_gaps = 0.0, obs = 0.0, cells = 0.0, events = 0.0, enc = 0.0;
  for (const auto& p : cohort) {
    if (p.regime != regime) continue;
    ++s.patients;
    enc += static_cast<double>(p.length());
    events += p.label.event ? 1.0 : 0.0;
    for (std::size_t j = 0; j < p.length(); ++j) {
      if (j > 0) {
        gaps += p.times[j] - p.times[j - 1];
        n_gaps += 1.0;
      }
      for (auto m : p.mask[j]) {
        obs += m;
        cells += 1.0;
      }
    }
  }
  if (s.patients == 0) return s;
  const double n = static_cast<double>(s.patients);
  s.mean_encounters = enc / n;
  s.mean_gap = n_gaps > 0 ? gaps / n_gaps : 0.0;
  s.observed_share = cells > 0 ? obs / cells : 0.0;
  s.event_share = events / n;
  return s;
}

}  // namespace deepjoint
