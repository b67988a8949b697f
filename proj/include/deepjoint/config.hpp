// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration: one YAML document per experiment. Every section
// is optional; unknown keys are rejected with their line number.
//
//   seed: 7
//   generator: {n_patients: 4000, rho: 0.3, kappa: 0.7, shift_rho: -0.15, shift_beta: [-1.0], ...}
//   model: {cell: lstm, hidden_dim: 10, num_layers: 1, survival_layers: [50], activation: tanh, ...}
//   train: {lr: 0.001, batch_size: 512, alpha: 0.1, max_epochs: 1000, joint_epochs: 500, patience: 10, ...}
//   evaluation: {horizons: [7, 30], bootstrap: 100, test_fraction: 0.2}
//   search: {draws: 50, lr: [0.001, 0.0001], batch_size: [512, 1024], ...}
//   transfer: {strategies: [last, count, ignore, resample, gru_d, feature, deepjoint]}
//   perturb: {kind: gap_jitter, radius: 0.01, copies: 5}

#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "deepjoint/synth.hpp"
#include "deepjoint/trainer.hpp"

namespace deepjoint {

struct EvaluationConfig {
  std::vector<double> horizons = {7.0, 30.0};
  std::size_t bootstrap = 100;
  double test_fraction = 0.2;
};

enum class PerturbKind { gap_jitter, mask_dropout };

inline std::string_view to_string(PerturbKind k) { return k == PerturbKind::gap_jitter ? "gap_jitter" : "mask_dropout"; }

inline PerturbKind parse_perturb_kind(std::string_view s) {
  if (s == "gap_jitter" || s == "gap-jitter") return PerturbKind::gap_jitter;
  if (s == "mask_dropout" || s == "mask-dropout") return PerturbKind::mask_dropout;
  throw ConfigError("unknown perturbation kind '" + std::string(s) + "'");
}

struct PerturbConfig {
  PerturbKind kind = PerturbKind::gap_jitter;
  double radius = 0.01;
  std::size_t copies = 5;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  GeneratorConfig generator;
  ModelConfig model;
  TrainConfig train;
  EvaluationConfig evaluation;
  SearchSpace search;
  std::size_t search_draws = 50;
  std::vector<Strategy> transfer_strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  PerturbConfig perturb;
};

namespace config_detail {

inline std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.line >= 0 ? "line " + std::to_string(m.line + 1) : "config";
}

template <class T>
T read(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(n) + ": invalid value for '" + key + "'");
  }
}

template <class T>
std::vector<T> read_list(const YAML::Node& n, const std::string& key) {
  if (n.IsScalar()) return {read<T>(n, key)};
  if (!n.IsSequence()) throw ConfigError(where(n) + ": '" + key + "' must be a list");
  std::vector<T> out;
  for (const auto& item : n) out.push_back(read<T>(item, key));
  return out;
}

/// Visits every key of a mapping; unknown keys are an error.
template <class F>
void each_key(const YAML::Node& section, const std::string& name, const std::set<std::string>& known, F f) {
  if (!section) return;
  if (!section.IsMap()) throw ConfigError(where(section) + ": section '" + name + "' must be a mapping");
  for (const auto& kv : section) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key)) throw ConfigError(where(kv.first) + ": unknown key '" + key + "' in section '" + name + "'");
    f(key, kv.second);
  }
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const YAML::Node& root) {
  using namespace config_detail;
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError(where(root) + ": the configuration must be a mapping");
  each_key(root, "root", {"seed", "generator", "model", "train", "evaluation", "search", "transfer", "perturb"},
           [](const std::string&, const YAML::Node&) {});
  if (root["seed"]) c.seed = read<std::uint64_t>(root["seed"], "seed");
  c.train.seed = c.seed;
  c.generator.seed = c.seed;

  auto& g = c.generator;
  each_key(root["generator"], "generator",
           {"n_patients", "regime_b_fraction", "labs", "latent_dim", "ou_theta", "grid_step", "rho", "kappa", "beta",
            "shift_rho", "shift_beta", "noise_std", "risk_weights", "weibull_scale", "weibull_shape",
            "censoring_rate", "max_follow_up", "deterministic_survival"},
           [&](const std::string& k, const YAML::Node& v) {
             if (k == "n_patients") g.n_patients = read<std::size_t>(v, k);
             else if (k == "regime_b_fraction") g.regime_b_fraction = read<double>(v, k);
             else if (k == "labs") g.labs = read<std::size_t>(v, k);
             else if (k == "latent_dim") g.latent_dim = read<std::size_t>(v, k);
             else if (k == "ou_theta") g.ou_theta = read<double>(v, k);
             else if (k == "grid_step") g.grid_step = read<double>(v, k);
             else if (k == "rho") g.rho = read<double>(v, k);
             else if (k == "kappa") g.kappa = read<double>(v, k);
             else if (k == "beta") g.beta = read_list<double>(v, k);
             else if (k == "shift_rho") g.shift_rho = read<double>(v, k);
             else if (k == "shift_beta") g.shift_beta = read_list<double>(v, k);
             else if (k == "noise_std") g.noise_std = read<double>(v, k);
             else if (k == "risk_weights") g.risk_weights = read_list<double>(v, k);
             else if (k == "weibull_scale") g.weibull_scale = read<double>(v, k);
             else if (k == "weibull_shape") g.weibull_shape = read<double>(v, k);
             else if (k == "censoring_rate") g.censoring_rate = read<double>(v, k);
             else if (k == "max_follow_up") g.max_follow_up = read<double>(v, k);
             else if (k == "deterministic_survival") g.deterministic_survival = read<bool>(v, k);
           });
  // Changing labs without listing beta keeps one default logit per lab.
  if (root["generator"] && root["generator"]["labs"] && !root["generator"]["beta"]) {
    GeneratorConfig defaults;
    g.beta.resize(g.labs);
    for (std::size_t k = 0; k < g.labs; ++k) g.beta[k] = defaults.beta[k % defaults.beta.size()];
  }

  auto& m = c.model;
  each_key(root["model"], "model",
           {"cell", "hidden_dim", "num_layers", "survival_layers", "intensity_layers", "missingness_layers",
            "activation", "censored_interval"},
           [&](const std::string& k, const YAML::Node& v) {
             try {
               if (k == "cell") m.cell = parse_cell(read<std::string>(v, k));
               else if (k == "hidden_dim") m.hidden_dim = read<std::size_t>(v, k);
               else if (k == "num_layers") m.num_layers = read<std::size_t>(v, k);
               else if (k == "survival_layers") m.survival_layers = read_list<std::size_t>(v, k);
               else if (k == "intensity_layers") m.intensity_layers = read_list<std::size_t>(v, k);
               else if (k == "missingness_layers") m.missingness_layers = read_list<std::size_t>(v, k);
               else if (k == "activation") m.activation = parse_activation(read<std::string>(v, k));
               else if (k == "censored_interval") m.censored_interval = read<bool>(v, k);
             } catch (const ConfigError& e) {
               const std::string what = e.what();
               if (what.rfind("line", 0) == 0) throw;
               throw ConfigError(where(v) + ": " + what);
             }
           });

  auto& t = c.train;
  each_key(root["train"], "train",
           {"lr", "batch_size", "alpha", "theta", "max_epochs", "joint_epochs", "patience", "val_fraction",
            "clip_norm"},
           [&](const std::string& k, const YAML::Node& v) {
             if (k == "lr") t.lr = read<double>(v, k);
             else if (k == "batch_size") t.batch_size = read<std::size_t>(v, k);
             else if (k == "alpha") t.alpha = read<double>(v, k);
             else if (k == "theta") t.theta = read<double>(v, k);
             else if (k == "max_epochs") t.max_epochs = read<std::size_t>(v, k);
             else if (k == "joint_epochs") t.joint_epochs = read<std::size_t>(v, k);
             else if (k == "patience") t.patience = read<std::size_t>(v, k);
             else if (k == "val_fraction") t.val_fraction = read<double>(v, k);
             else if (k == "clip_norm") t.clip_norm = read<double>(v, k);
           });

  auto& e = c.evaluation;
  each_key(root["evaluation"], "evaluation", {"horizons", "bootstrap", "test_fraction"},
           [&](const std::string& k, const YAML::Node& v) {
             if (k == "horizons") e.horizons = read_list<double>(v, k);
             else if (k == "bootstrap") e.bootstrap = read<std::size_t>(v, k);
             else if (k == "test_fraction") e.test_fraction = read<double>(v, k);
           });

  auto& s = c.search;
  each_key(root["search"], "search",
           {"draws", "lr", "batch_size", "alpha", "rnn_layers", "hidden_dim", "head_layers", "nodes"},
           [&](const std::string& k, const YAML::Node& v) {
             if (k == "draws") c.search_draws = read<std::size_t>(v, k);
             else if (k == "lr") s.lr = read_list<double>(v, k);
             else if (k == "batch_size") s.batch_size = read_list<std::size_t>(v, k);
             else if (k == "alpha") s.alpha = read_list<double>(v, k);
             else if (k == "rnn_layers") s.rnn_layers = read_list<std::size_t>(v, k);
             else if (k == "hidden_dim") s.hidden_dim = read_list<std::size_t>(v, k);
             else if (k == "head_layers") s.head_layers = read_list<std::size_t>(v, k);
             else if (k == "nodes") s.nodes = read_list<std::size_t>(v, k);
           });

  each_key(root["transfer"], "transfer", {"strategies"}, [&](const std::string& k, const YAML::Node& v) {
    c.transfer_strategies.clear();
    for (const auto& name : read_list<std::string>(v, k)) {
      try {
        c.transfer_strategies.push_back(parse_strategy(name));
      } catch (const ConfigError& err) {
        throw ConfigError(where(v) + ": " + err.what());
      }
    }
  });

  auto& p = c.perturb;
  each_key(root["perturb"], "perturb", {"kind", "radius", "copies"}, [&](const std::string& k, const YAML::Node& v) {
    if (k == "kind") {
      try {
        p.kind = parse_perturb_kind(read<std::string>(v, k));
      } catch (const ConfigError& err) {
        throw ConfigError(where(v) + ": " + err.what());
      }
    } else if (k == "radius") p.radius = read<double>(v, k);
    else if (k == "copies") p.copies = read<std::size_t>(v, k);
  });
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  try {
    return parse_config(YAML::Load(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  try {
    return parse_config(YAML::LoadFile(path));
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file '" + path + "'");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const GeneratorConfig& g) {
  return {{"n_patients", g.n_patients},     {"regime_b_fraction", g.regime_b_fraction},
          {"labs", g.labs},                 {"latent_dim", g.latent_dim},
          {"ou_theta", g.ou_theta},         {"grid_step", g.grid_step},
          {"rho", g.rho},                   {"kappa", g.kappa},
          {"beta", g.beta},                 {"shift_rho", g.shift_rho},
          {"shift_beta", g.shift_beta},     {"noise_std", g.noise_std},
          {"risk_weights", g.risk_weights}, {"weibull_scale", g.weibull_scale},
          {"weibull_shape", g.weibull_shape}, {"censoring_rate", g.censoring_rate},
          {"max_follow_up", g.max_follow_up}, {"deterministic_survival", g.deterministic_survival},
          {"seed", g.seed}};
}

}  // namespace deepjoint
