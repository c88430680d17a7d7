#include "json_io.hpp"

#include <algorithm>
#include <string>

#include "afford/error.hpp"

namespace afford {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) fail(ErrorCode::kConfig, std::string("section '") + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) fail(ErrorCode::kConfig, "unknown key '" + key + "' in section '" + section + "'");
  }
}

namespace {

template <typename U>
void read(const nlohmann::json& j, const char* key, U& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<U>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kConfig, std::string("key '") + key + "' has the wrong type");
  }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"d_model", c.d_model},
      {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},
      {"patch_size", c.patch_size},
      {"ff_mult", c.ff_mult},
      {"n_instructions", c.n_instructions},
      {"step_embed_dim", c.step_embed_dim},
      {"max_depth", c.max_depth},
      {"rope_min_wavelength", c.rope_min_wavelength},
      {"rope_max_wavelength", c.rope_max_wavelength},
      {"rotary_values", c.rotary_values},
      {"scene_attends_affordance", c.scene_attends_affordance},
      {"use_masked_branch", c.use_masked_branch},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  check_keys(j,
             {"d_model", "n_layers", "n_heads", "patch_size", "ff_mult", "n_instructions", "step_embed_dim",
              "max_depth", "rope_min_wavelength", "rope_max_wavelength", "rotary_values", "scene_attends_affordance",
              "use_masked_branch"},
             "model");
  read(j, "d_model", c.d_model);
  read(j, "n_layers", c.n_layers);
  read(j, "n_heads", c.n_heads);
  read(j, "patch_size", c.patch_size);
  read(j, "ff_mult", c.ff_mult);
  read(j, "n_instructions", c.n_instructions);
  read(j, "step_embed_dim", c.step_embed_dim);
  read(j, "max_depth", c.max_depth);
  read(j, "rope_min_wavelength", c.rope_min_wavelength);
  read(j, "rope_max_wavelength", c.rope_max_wavelength);
  read(j, "rotary_values", c.rotary_values);
  read(j, "scene_attends_affordance", c.scene_attends_affordance);
  read(j, "use_masked_branch", c.use_masked_branch);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"model", to_json(c.model)},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"batch_size", c.batch_size},
      {"steps", c.steps},
      {"warmup_steps", c.warmup_steps},
      {"min_lr_ratio", c.min_lr_ratio},
      {"grad_clip", c.grad_clip},
      {"noise_draws", c.noise_draws},
      {"w_loc", c.weights.w_loc},
      {"w_rot", c.weights.w_rot},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  check_keys(j,
             {"model", "lr", "weight_decay", "beta1", "beta2", "adam_eps", "batch_size", "steps", "warmup_steps",
              "min_lr_ratio", "grad_clip", "noise_draws", "w_loc", "w_rot", "seed"},
             "train");
  if (j.contains("model")) from_json(j.at("model"), c.model);
  read(j, "lr", c.lr);
  read(j, "weight_decay", c.weight_decay);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "batch_size", c.batch_size);
  read(j, "steps", c.steps);
  read(j, "warmup_steps", c.warmup_steps);
  read(j, "min_lr_ratio", c.min_lr_ratio);
  read(j, "grad_clip", c.grad_clip);
  read(j, "noise_draws", c.noise_draws);
  read(j, "w_loc", c.weights.w_loc);
  read(j, "w_rot", c.weights.w_rot);
  read(j, "seed", c.seed);
}

}  // namespace afford
