// SPDX-License-Identifier: Apache-2.0
#pragma once

// Checkpoints are JSON documents. Doubles are written with 17 significant
// digits, which round-trips every finite value exactly.

#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "deepjoint/trainer.hpp"

namespace deepjoint {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

inline nlohmann::json to_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"strategy", to_string(c.strategy)},
          {"labs", c.labs},
          {"cell", to_string(c.cell)},
          {"hidden_dim", c.hidden_dim},
          {"num_layers", c.num_layers},
          {"survival_layers", c.survival_layers},
          {"intensity_layers", c.intensity_layers},
          {"missingness_layers", c.missingness_layers},
          {"activation", to_string(c.activation)},
          {"censored_interval", c.censored_interval}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.labs = j.at("labs").get<std::size_t>();
  c.cell = parse_cell(j.at("cell").get<std::string>());
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.survival_layers = j.at("survival_layers").get<std::vector<std::size_t>>();
  c.intensity_layers = j.at("intensity_layers").get<std::vector<std::size_t>>();
  c.missingness_layers = j.at("missingness_layers").get<std::vector<std::size_t>>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.censored_interval = j.at("censored_interval").get<bool>();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"alpha", c.alpha},
          {"theta", c.theta},
          {"max_epochs", c.max_epochs},
          {"joint_epochs", c.joint_epochs},
          {"patience", c.patience},
          {"val_fraction", c.val_fraction},
          {"clip_norm", c.clip_norm ? nlohmann::json(*c.clip_norm) : nlohmann::json()},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.theta = j.at("theta").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.joint_epochs = j.at("joint_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.val_fraction = j.at("val_fraction").get<double>();
  if (!j.at("clip_norm").is_null()) c.clip_norm = j.at("clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json to_json(const TrainStatistics& s) {
  return {{"lab_mean", s.lab_mean}, {"lab_std", s.lab_std}, {"gap_mean", s.gap_mean},
          {"gap_std", s.gap_std},   {"provenance", s.provenance}};
}

inline TrainStatistics statistics_from_json(const nlohmann::json& j) {
  TrainStatistics s;
  s.lab_mean = j.at("lab_mean").get<std::vector<double>>();
  s.lab_std = j.at("lab_std").get<std::vector<double>>();
  s.gap_mean = j.at("gap_mean").get<double>();
  s.gap_std = j.at("gap_std").get<double>();
  s.provenance = j.at("provenance").get<std::string>();
  return s;
}

inline nlohmann::json checkpoint_json(JointModel& model, const TrainConfig& train) {
  nlohmann::json params = nlohmann::json::object();
  for (auto* p : model.parameters()) params[p->id] = to_json(p->value);
  nlohmann::json j = {{"format_version", kCheckpointFormatVersion},
                      {"kind", "deepjoint-checkpoint"},
                      {"model", to_json(model.config())},
                      {"train", to_json(train)},
                      {"statistics", to_json(model.statistics)},
                      {"parameters", std::move(params)},
                      {"breslow",
                       {{"event_times", model.breslow.event_times},
                        {"cumulative_baseline", model.breslow.cumulative_baseline}}}};
  if (model.has_encoder())
    if (auto* c = std::get_if<GruDCell>(&model.encoder().layers().front())) j["gru_d_means"] = to_json(c->means());
  return j;
}

struct LoadedCheckpoint {
  JointModel model;
  TrainConfig train;
};

inline LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw DataError("checkpoint: unsupported format_version " + j.at("format_version").dump());
    LoadedCheckpoint out{JointModel(model_config_from_json(j.at("model")), 0), train_config_from_json(j.at("train"))};
    out.model.statistics = statistics_from_json(j.at("statistics"));
    const auto& params = j.at("parameters");
    auto list = out.model.parameters();
    if (params.size() != list.size())
      throw DataError("checkpoint: " + std::to_string(params.size()) + " parameters stored, model has " +
                      std::to_string(list.size()));
    for (auto* p : list) {
      if (!params.contains(p->id)) throw DataError("checkpoint: missing parameter '" + p->id + "'");
      Tensor t = tensor_from_json(params.at(p->id));
      if (!t.same_shape(p->value))
        throw DataError("checkpoint: parameter '" + p->id + "' has shape " + t.shape_string() + ", expected " +
                        p->value.shape_string());
      p->value = std::move(t);
    }
    out.model.breslow.event_times = j.at("breslow").at("event_times").get<std::vector<double>>();
    out.model.breslow.cumulative_baseline = j.at("breslow").at("cumulative_baseline").get<std::vector<double>>();
    if (j.contains("gru_d_means")) out.model.set_gru_d_means(tensor_from_json(j.at("gru_d_means")));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed document (") + e.what() + ")");
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move '" + tmp + "' to '" + path + "'");
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void save_checkpoint(const std::string& path, JointModel& model, const TrainConfig& train) {
  write_json_file(path, checkpoint_json(model, train));
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

}  // namespace deepjoint
