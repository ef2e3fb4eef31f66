#include "ipg/harness/config.hpp"

#include <fstream>
#include <set>

#include "ipg/errors.hpp"
#include "ipg/data_synth.hpp"
#include "ipg/rng.hpp"

namespace ipg {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  schedule.validate();
  if (data.image_size < 1) throw ConfigError("data.image_size must be >= 1");
  require_disjoint({generate_split("train", data.train_size, data.train_seed),
                    generate_split("val", data.val_size, data.val_seed)});
  if (eval.score_thresh < 0 || eval.score_thresh > 1 || eval.iou_thresh < 0 || eval.iou_thresh > 1) {
    throw ConfigError("eval thresholds must lie in [0, 1]");
  }
  if (eval.max_boxes < 1) throw ConfigError("eval.max_boxes must be >= 1");
}

json to_json(const NetworkConfig& m) {
  return json{{"c1", m.c1},
              {"n_stages", m.n_stages},
              {"keep_last3", m.keep_last3},
              {"fusion_variant", to_string(m.fusion_variant)},
              {"fusion_stages", std::vector<int>(m.fusion_stages.begin(), m.fusion_stages.end())},
              {"pyramid_levels", m.pyramid_levels},
              {"fpn_channels", m.fpn_channels},
              {"n_classes", m.n_classes},
              {"head_levels", m.head_levels}};
}

json to_json(const RunConfig& c) {
  const TrainSchedule& s = c.schedule;
  return json{
      {"model", to_json(c.model)},
      {"schedule",
       {{"base_lr", s.base_lr},
        {"total_epochs", s.total_epochs},
        {"decay_epochs", s.decay_epochs},
        {"decay_factor", s.decay_factor},
        {"warmup_iters", s.warmup_iters},
        {"warmup_ratio", s.warmup_ratio},
        {"momentum", s.momentum},
        {"weight_decay", s.weight_decay},
        {"batch_size", s.batch_size},
        {"grad_clip_norm", s.grad_clip_norm}}},
      {"data",
       {{"train_size", c.data.train_size},
        {"train_seed", c.data.train_seed},
        {"val_size", c.data.val_size},
        {"val_seed", c.data.val_seed},
        {"image_size", c.data.image_size}}},
      {"eval",
       {{"score_thresh", c.eval.score_thresh},
        {"nms_iou", c.eval.iou_thresh},
        {"max_boxes", c.eval.max_boxes}}},
      {"seed", c.seed}};
}

NetworkConfig network_config_from_json(const json& j) {
  reject_unknown(j,
                 {"c1", "n_stages", "keep_last3", "fusion_variant", "fusion_stages",
                  "pyramid_levels", "fpn_channels", "n_classes", "head_levels"},
                 "model");
  NetworkConfig m;
  read(j, "c1", m.c1);
  read(j, "n_stages", m.n_stages);
  read(j, "keep_last3", m.keep_last3);
  std::string variant = to_string(m.fusion_variant);
  read(j, "fusion_variant", variant);
  m.fusion_variant = parse_fusion_kind(variant);
  if (j.contains("fusion_stages")) {
    std::vector<int> stages;
    read(j, "fusion_stages", stages);
    m.fusion_stages = std::set<int>(stages.begin(), stages.end());
  }
  read(j, "pyramid_levels", m.pyramid_levels);
  read(j, "fpn_channels", m.fpn_channels);
  read(j, "n_classes", m.n_classes);
  read(j, "head_levels", m.head_levels);
  return m;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "schedule", "data", "eval", "seed"}, "config");
  RunConfig c;
  if (j.contains("model")) c.model = network_config_from_json(j.at("model"));
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    reject_unknown(s,
                   {"base_lr", "total_epochs", "decay_epochs", "decay_factor", "warmup_iters",
                    "warmup_ratio", "momentum", "weight_decay", "batch_size", "grad_clip_norm"},
                   "schedule");
    read(s, "base_lr", c.schedule.base_lr);
    read(s, "total_epochs", c.schedule.total_epochs);
    read(s, "decay_epochs", c.schedule.decay_epochs);
    read(s, "decay_factor", c.schedule.decay_factor);
    read(s, "warmup_iters", c.schedule.warmup_iters);
    read(s, "warmup_ratio", c.schedule.warmup_ratio);
    read(s, "momentum", c.schedule.momentum);
    read(s, "weight_decay", c.schedule.weight_decay);
    read(s, "batch_size", c.schedule.batch_size);
    read(s, "grad_clip_norm", c.schedule.grad_clip_norm);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"train_size", "train_seed", "val_size", "val_seed", "image_size"}, "data");
    read(d, "train_size", c.data.train_size);
    read(d, "train_seed", c.data.train_seed);
    read(d, "val_size", c.data.val_size);
    read(d, "val_seed", c.data.val_seed);
    read(d, "image_size", c.data.image_size);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, {"score_thresh", "nms_iou", "max_boxes"}, "eval");
    read(e, "score_thresh", c.eval.score_thresh);
    read(e, "nms_iou", c.eval.iou_thresh);
    read(e, "max_boxes", c.eval.max_boxes);
  }
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << to_json(config).dump(2) << '\n';
}

std::uint64_t config_digest(const NetworkConfig& model) {
  return fnv1a(to_json(model).dump());
}

}  // namespace ipg
