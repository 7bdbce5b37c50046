#pragma once

#include <string>
#include <vector>

#include "casediag/data.hpp"
#include "casediag/io.hpp"
#include "casediag/losses.hpp"
#include "casediag/model.hpp"

namespace casediag {

/// Rejects unknown keys so config typos never pass silently.
inline void check_keys(const Json& j, const std::vector<std::string>& known,
                       const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

inline Json to_json(const UNetConfig& c) {
  return Json{{"levels", c.levels},
              {"base_channels", c.base_channels},
              {"patch_shape", {c.patch_shape[0], c.patch_shape[1], c.patch_shape[2]}},
              {"norm_enabled", c.norm_enabled},
              {"latent_dim", c.latent_dim()}};
}

inline UNetConfig unet_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"levels", "base_channels", "patch_shape", "norm_enabled", "latent_dim"}, where);
  UNetConfig c;
  if (j.contains("levels")) c.levels = json_get<int>(j, "levels", where);
  if (j.contains("base_channels")) c.base_channels = json_get<int>(j, "base_channels", where);
  if (j.contains("patch_shape")) {
    const auto p = json_get<std::vector<int>>(j, "patch_shape", where);
    if (p.size() != 3) throw ConfigError(where + ": patch_shape must have 3 entries");
    c.patch_shape = {p[0], p[1], p[2]};
  }
  if (j.contains("norm_enabled")) c.norm_enabled = json_get<bool>(j, "norm_enabled", where);
  c.validate();
  return c;
}

inline Json to_json(const LossConfig& c) {
  return Json{{"margin", c.margin}, {"omega", c.omega}, {"dice_eps", c.dice_eps}};
}

inline LossConfig loss_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"margin", "omega", "dice_eps"}, where);
  LossConfig c;
  if (j.contains("margin")) c.margin = json_get<double>(j, "margin", where);
  if (j.contains("omega")) c.omega = json_get<double>(j, "omega", where);
  if (j.contains("dice_eps")) c.dice_eps = json_get<double>(j, "dice_eps", where);
  c.validate();
  return c;
}

inline Json to_json(const AugmentConfig& c) {
  return Json{{"probability", c.probability},
              {"contrast", {c.contrast_lo, c.contrast_hi}},
              {"noise_sigma", {c.noise_sigma_lo, c.noise_sigma_hi}},
              {"rot_max_deg", c.rot_max_deg},
              {"scale", {c.scale_lo, c.scale_hi}},
              {"translate_max_vox", c.translate_max_vox}};
}

inline AugmentConfig augment_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"probability", "contrast", "noise_sigma", "rot_max_deg", "scale",
                 "translate_max_vox"},
             where);
  AugmentConfig c;
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = json_get<std::vector<double>>(j, key, where);
    if (v.size() != 2) throw ConfigError(where + ": " + key + " must be [lo, hi]");
    lo = v[0];
    hi = v[1];
  };
  if (j.contains("probability")) c.probability = json_get<double>(j, "probability", where);
  if (c.probability < 0 || c.probability > 1)
    throw ConfigError(where + ": probability must be in [0,1]");
  range("contrast", c.contrast_lo, c.contrast_hi);
  range("noise_sigma", c.noise_sigma_lo, c.noise_sigma_hi);
  range("scale", c.scale_lo, c.scale_hi);
  if (j.contains("rot_max_deg")) c.rot_max_deg = json_get<double>(j, "rot_max_deg", where);
  if (j.contains("translate_max_vox"))
    c.translate_max_vox = json_get<double>(j, "translate_max_vox", where);
  return c;
}

}  // namespace casediag
