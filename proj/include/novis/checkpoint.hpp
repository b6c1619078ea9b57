#pragma once

// Checkpoint directory: config.json plus one binary tensor container per
// named parameter.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "novis/model.hpp"
#include "novis/tensor_io.hpp"

namespace novis {

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["scales"] = cfg.scales;
  j["layers"] = cfg.layers;
  j["queries"] = cfg.queries;
  j["hidden"] = cfg.hidden;
  j["classes"] = cfg.classes;
  j["t_max"] = cfg.t_max;
  j["heads"] = cfg.heads;
  j["ffn_mult"] = cfg.ffn_mult;
  j["attend_mask_scale"] = cfg.attend_mask_scale;
  j["seed"] = cfg.seed;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.scales = j.value("scales", cfg.scales);
  cfg.layers = j.value("layers", cfg.layers);
  cfg.queries = j.value("queries", cfg.queries);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.classes = j.value("classes", cfg.classes);
  cfg.t_max = j.value("t_max", cfg.t_max);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.ffn_mult = j.value("ffn_mult", cfg.ffn_mult);
  cfg.attend_mask_scale = j.value("attend_mask_scale", cfg.attend_mask_scale);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

inline void save_checkpoint(const std::string& dir, const VideoModel& model) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "params");
  {
    std::ofstream out(fs::path(dir) / "config.json");
    check_contract(out.good(), "save_checkpoint: cannot write config in " + dir);
    out << model_config_to_json(model.config()).dump(2) << "\n";
  }
  for (const auto& [name, tensor] : model.parameters())
    save_tensor((fs::path(dir) / "params" / (name + ".nvt")).string(), tensor);
}

inline VideoModel load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "config.json");
  check_contract(in.good(), "load_checkpoint: missing config.json in " + dir);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw contract_error("load_checkpoint: malformed config.json in " + dir + ": " + e.what());
  }
  VideoModel model(model_config_from_json(j));
  for (auto& [name, tensor] : model.parameters()) {
    auto loaded = load_tensor((fs::path(dir) / "params" / (name + ".nvt")).string());
    check_contract(loaded.shape() == tensor.shape(),
                   "load_checkpoint: shape mismatch for parameter " + name);
    std::copy(loaded.data(), loaded.data() + loaded.size(), tensor.data());
  }
  return model;
}

}  // namespace novis
