#pragma once

#include <string>
#include <vector>

#include "casediag/config_json.hpp"
#include "casediag/trainer.hpp"

namespace casediag {

/// One configuration document per run: model, loss, augmentation, training
/// and inference settings plus the master seed. Unknown keys are rejected.
struct RunConfig {
  int version = 1;
  std::uint64_t seed = 7;
  UNetConfig unet;
  AugmentConfig augment;
  TrainConfig train;  // carries LossConfig and the seed
  std::vector<int> k_grid = {1, 3, 5, 7, 9, 11, 13, 15};
};

inline Json to_json(const RunConfig& c) {
  Json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["unet"] = to_json(c.unet);
  j["loss"] = to_json(c.train.loss);
  j["augment"] = to_json(c.augment);
  Json t = to_json(c.train);
  t.erase("loss");
  t.erase("seed");
  j["train"] = t;
  j["inference"] = Json{{"k_grid", c.k_grid}};
  return j;
}

inline RunConfig run_config_from_json(const Json& j) {
  const std::string where = "run config";
  check_keys(j, {"version", "seed", "unet", "loss", "augment", "train", "inference"}, where);
  RunConfig c;
  if (j.contains("version")) c.version = json_get<int>(j, "version", where);
  if (c.version != 1)
    throw ConfigError(where + ": unsupported version " + std::to_string(c.version));
  if (j.contains("seed")) c.seed = json_get<std::uint64_t>(j, "seed", where);
  if (j.contains("unet")) c.unet = unet_from_json(j.at("unet"), where + ".unet");
  if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"), where + ".augment");
  if (j.contains("train")) {
    if (j.at("train").contains("loss") || j.at("train").contains("seed"))
      throw ConfigError(where + ": \"loss\" and \"seed\" belong at the top level, not in train");
    c.train = train_from_json(j.at("train"), where + ".train");
  }
  if (j.contains("loss")) c.train.loss = loss_from_json(j.at("loss"), where + ".loss");
  c.train.seed = c.seed;
  if (j.contains("inference")) {
    check_keys(j.at("inference"), {"k_grid"}, where + ".inference");
    if (j.at("inference").contains("k_grid"))
      c.k_grid = json_get<std::vector<int>>(j.at("inference"), "k_grid", where + ".inference");
  }
  if (c.k_grid.empty()) throw ConfigError(where + ": inference.k_grid must not be empty");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(load_json(path));
}

}  // namespace casediag
