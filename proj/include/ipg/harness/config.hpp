#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ipg/backbone.hpp"
#include "ipg/detector.hpp"
#include "ipg/harness/schedule.hpp"

namespace ipg {

struct DataConfig {
  int train_size = 512;
  std::uint64_t train_seed = 0;
  int val_size = 128;
  std::uint64_t val_seed = 10000;
  int image_size = 128;
};

// Everything a training run depends on. Loaded from / saved to JSON with
// top-level keys model, schedule, data, eval, seed.
struct RunConfig {
  NetworkConfig model;
  TrainSchedule schedule;
  DataConfig data;
  DecodeParams eval;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const NetworkConfig& m);
nlohmann::json to_json(const RunConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& config, const std::string& path);

// Digest of the model section; checkpoints carry it.
std::uint64_t config_digest(const NetworkConfig& model);

}  // namespace ipg
