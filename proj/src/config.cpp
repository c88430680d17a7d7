#include "afford/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "afford/error.hpp"
#include "json_io.hpp"

namespace afford {

using nlohmann::json;

namespace {

/// 1-based line of the first `"key"` at or after the first `"section"`; 1 when not found.
int line_of(const std::string& text, const std::string& section, const std::string& key) {
  size_t from = 0;
  if (!section.empty()) {
    const size_t s = text.find("\"" + section + "\"");
    if (s != std::string::npos) from = s;
  }
  size_t pos = key.empty() ? from : text.find("\"" + key + "\"", from);
  if (pos == std::string::npos) pos = from;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

struct Ctx {
  const std::string& text;
  const std::string& source;
  std::string section;

  [[noreturn]] void error(const std::string& key, const std::string& msg) const {
    fail(ErrorCode::kConfig, source + ":" + std::to_string(line_of(text, section, key)) + ": " + msg);
  }

  template <typename U>
  void read(const json& j, const char* key, U& out) const {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<U>();
    } catch (const json::exception&) {
      error(key, "'" + section + "." + key + "' has the wrong type");
    }
  }

  void keys(const json& j, std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) error("", "section '" + section + "' must be an object");
    for (const auto& [k, _] : j.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
        error(k, "unknown key '" + k + "' in section '" + section + "'");
      }
    }
  }
};

ScheduleKind kind_from(const Ctx& c, const std::string& key, const std::string& name) {
  if (name == "scaled_linear") return ScheduleKind::kScaledLinear;
  if (name == "squared_cosine") return ScheduleKind::kSquaredCosine;
  c.error(key, "schedule kind must be 'scaled_linear' or 'squared_cosine'");
}

std::string kind_name(ScheduleKind k) { return k == ScheduleKind::kScaledLinear ? "scaled_linear" : "squared_cosine"; }

void parse_schedule(const Ctx& c, const json& j, ScheduleKind& kind, ScheduleParams& p) {
  c.keys(j, {"kind", "beta_start", "beta_end", "cosine_offset"});
  if (j.contains("kind")) {
    std::string name;
    c.read(j, "kind", name);
    kind = kind_from(c, "kind", name);
  }
  c.read(j, "beta_start", p.beta_start);
  c.read(j, "beta_end", p.beta_end);
  c.read(j, "cosine_offset", p.cosine_offset);
}

}  // namespace

void RunConfig::validate() const {
  gen.generator.validate();
  if (gen.count < 0 || gen.robot_count < 0) fail(ErrorCode::kBadParams, "record counts must be non-negative");
  build_schedule(schedules.loc_kind, schedules.n_steps, schedules.loc);
  build_schedule(schedules.rot_kind, schedules.n_steps, schedules.rot);
  train.train.validate();
  if (train.holdout_fraction < 0.0 || train.holdout_fraction >= 1.0) fail(ErrorCode::kBadParams, "holdout_fraction in [0, 1)");
  if (train.eval_every < 0 || train.eval_scenes < 1 || train.log_every < 1) fail(ErrorCode::kBadParams, "train logging cadence");
  if (eval.samples_per_scene < 1 || !(eval.sigma_h > 0.0) || eval.threads < 1 || overlays < 0) fail(ErrorCode::kBadParams, "eval settings");
  if (curation.options.max_components < 1 || curation.options.object_point_stride < 1) {
    fail(ErrorCode::kBadParams, "curation settings");
  }
  if (curation.success_threshold < 0.0 || curation.success_threshold > 1.0) {
    fail(ErrorCode::kBadParams, "success_threshold must lie in [0, 1]");
  }
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const size_t byte = std::min<size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte ? byte - 1 : 0), '\n'));
    fail(ErrorCode::kConfig, source + ":" + std::to_string(line) + ": JSON syntax error: " + e.what());
  }
  RunConfig cfg;
  Ctx top{text, source, ""};
  top.keys(root, {"generator", "schedules", "model", "train", "eval", "curation", "paths"});

  if (root.contains("generator")) {
    Ctx c{text, source, "generator"};
    const json& j = root["generator"];
    c.keys(j, {"count", "robot_count", "seed", "id_prefix", "width", "height", "archetypes", "scale_min", "scale_max",
               "yaw_range_deg", "max_clutter", "track_noise_px", "track_shift_px", "track_dropout",
               "region_dilation_px", "twin_probability", "grip_width_m", "provenance"});
    GeneratorConfig& g = cfg.gen.generator;
    c.read(j, "count", cfg.gen.count);
    c.read(j, "robot_count", cfg.gen.robot_count);
    c.read(j, "seed", cfg.gen.seed);
    c.read(j, "id_prefix", cfg.gen.id_prefix);
    c.read(j, "width", g.width);
    c.read(j, "height", g.height);
    if (j.contains("archetypes")) {
      std::vector<std::string> names;
      c.read(j, "archetypes", names);
      g.archetypes.clear();
      for (const auto& n : names) {
        try {
          g.archetypes.push_back(archetype_from_name(n));
        } catch (const Error&) {
          c.error("archetypes", "unknown archetype '" + n + "'");
        }
      }
    }
    c.read(j, "scale_min", g.scale_min);
    c.read(j, "scale_max", g.scale_max);
    c.read(j, "yaw_range_deg", g.yaw_range_deg);
    c.read(j, "max_clutter", g.max_clutter);
    c.read(j, "track_noise_px", g.track_noise_px);
    c.read(j, "track_shift_px", g.track_shift_px);
    c.read(j, "track_dropout", g.track_dropout);
    c.read(j, "region_dilation_px", g.region_dilation_px);
    c.read(j, "twin_probability", g.twin_probability);
    c.read(j, "grip_width_m", g.grip_width_m);
    if (j.contains("provenance")) {
      std::string p;
      c.read(j, "provenance", p);
      try {
        g.provenance = provenance_from_name(p);
      } catch (const Error&) {
        c.error("provenance", "unknown provenance '" + p + "'");
      }
    }
    try {
      g.validate();
      if (cfg.gen.count < 0 || cfg.gen.robot_count < 0) fail(ErrorCode::kBadParams, "record counts must be non-negative");
    } catch (const Error& e) {
      c.error("", e.what());
    }
  }

  if (root.contains("schedules")) {
    Ctx c{text, source, "schedules"};
    const json& j = root["schedules"];
    c.keys(j, {"n_steps", "loc", "rot"});
    c.read(j, "n_steps", cfg.schedules.n_steps);
    if (j.contains("loc")) {
      Ctx cl{text, source, "loc"};
      parse_schedule(cl, j["loc"], cfg.schedules.loc_kind, cfg.schedules.loc);
    }
    if (j.contains("rot")) {
      Ctx cr{text, source, "rot"};
      parse_schedule(cr, j["rot"], cfg.schedules.rot_kind, cfg.schedules.rot);
    }
    try {
      cfg.schedules.build_loc();
      cfg.schedules.build_rot();
    } catch (const Error& e) {
      c.error("", e.what());
    }
  }

  if (root.contains("model")) {
    Ctx c{text, source, "model"};
    try {
      from_json(root["model"], cfg.train.train.model);
      cfg.train.train.model.validate();
    } catch (const Error& e) {
      c.error("", e.what());
    }
  }

  if (root.contains("train")) {
    Ctx c{text, source, "train"};
    const json& j = root["train"];
    c.keys(j, {"lr", "weight_decay", "beta1", "beta2", "adam_eps", "batch_size", "steps", "warmup_steps",
               "min_lr_ratio", "grad_clip", "noise_draws", "w_loc", "w_rot", "seed", "init_seed", "holdout_fraction",
               "eval_every", "eval_scenes", "log_every"});
    TrainConfig& t = cfg.train.train;
    c.read(j, "lr", t.lr);
    c.read(j, "weight_decay", t.weight_decay);
    c.read(j, "beta1", t.beta1);
    c.read(j, "beta2", t.beta2);
    c.read(j, "adam_eps", t.adam_eps);
    c.read(j, "batch_size", t.batch_size);
    c.read(j, "steps", t.steps);
    c.read(j, "warmup_steps", t.warmup_steps);
    c.read(j, "min_lr_ratio", t.min_lr_ratio);
    c.read(j, "grad_clip", t.grad_clip);
    c.read(j, "noise_draws", t.noise_draws);
    c.read(j, "w_loc", t.weights.w_loc);
    c.read(j, "w_rot", t.weights.w_rot);
    c.read(j, "seed", t.seed);
    c.read(j, "init_seed", cfg.train.init_seed);
    c.read(j, "holdout_fraction", cfg.train.holdout_fraction);
    c.read(j, "eval_every", cfg.train.eval_every);
    c.read(j, "eval_scenes", cfg.train.eval_scenes);
    c.read(j, "log_every", cfg.train.log_every);
    try {
      t.validate();
      if (t.weights.w_loc == 0.0 && t.weights.w_rot == 0.0) fail(ErrorCode::kBadParams, "w_loc and w_rot cannot both be 0");
    } catch (const Error& e) {
      c.error("", e.what());
    }
  }

  if (root.contains("eval")) {
    Ctx c{text, source, "eval"};
    const json& j = root["eval"];
    c.keys(j, {"sigma_h", "samples_per_scene", "seed", "threads", "overlays"});
    c.read(j, "sigma_h", cfg.eval.sigma_h);
    c.read(j, "samples_per_scene", cfg.eval.samples_per_scene);
    c.read(j, "seed", cfg.eval.seed);
    c.read(j, "threads", cfg.eval.threads);
    c.read(j, "overlays", cfg.overlays);
  }

  if (root.contains("curation")) {
    Ctx c{text, source, "curation"};
    const json& j = root["curation"];
    c.keys(j, {"max_components", "object_point_stride", "success_threshold", "sigma_d", "contact_radius",
               "proximity_weight"});
    c.read(j, "max_components", cfg.curation.options.max_components);
    c.read(j, "object_point_stride", cfg.curation.options.object_point_stride);
    c.read(j, "success_threshold", cfg.curation.success_threshold);
    c.read(j, "sigma_d", cfg.curation.options.grip.sigma_d);
    c.read(j, "contact_radius", cfg.curation.options.grip.contact_radius);
    c.read(j, "proximity_weight", cfg.curation.options.grip.proximity_weight);
  }

  if (root.contains("paths")) {
    Ctx c{text, source, "paths"};
    const json& j = root["paths"];
    c.keys(j, {"dataset", "model", "out"});
    c.read(j, "dataset", cfg.paths.dataset);
    c.read(j, "model", cfg.paths.model);
    c.read(j, "out", cfg.paths.out);
  }

  try {
    cfg.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    fail(ErrorCode::kConfig, source + ":1: " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kConfig, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string run_config_json(const RunConfig& cfg) {
  const GeneratorConfig& g = cfg.gen.generator;
  json arche = json::array();
  for (auto a : g.archetypes) arche.push_back(std::string(archetype_name(a)));
  json j;
  j["generator"] = {{"count", cfg.gen.count},
                    {"robot_count", cfg.gen.robot_count},
                    {"seed", cfg.gen.seed},
                    {"id_prefix", cfg.gen.id_prefix},
                    {"width", g.width},
                    {"height", g.height},
                    {"archetypes", arche},
                    {"scale_min", g.scale_min},
                    {"scale_max", g.scale_max},
                    {"yaw_range_deg", g.yaw_range_deg},
                    {"max_clutter", g.max_clutter},
                    {"track_noise_px", g.track_noise_px},
                    {"track_shift_px", g.track_shift_px},
                    {"track_dropout", g.track_dropout},
                    {"region_dilation_px", g.region_dilation_px},
                    {"twin_probability", g.twin_probability},
                    {"grip_width_m", g.grip_width_m},
                    {"provenance", std::string(provenance_name(g.provenance))}};
  auto sched = [](ScheduleKind k, const ScheduleParams& p) {
    return json{{"kind", kind_name(k)}, {"beta_start", p.beta_start}, {"beta_end", p.beta_end},
                {"cosine_offset", p.cosine_offset}};
  };
  j["schedules"] = {{"n_steps", cfg.schedules.n_steps},
                    {"loc", sched(cfg.schedules.loc_kind, cfg.schedules.loc)},
                    {"rot", sched(cfg.schedules.rot_kind, cfg.schedules.rot)}};
  j["model"] = to_json(cfg.train.train.model);
  json t = to_json(cfg.train.train);
  t.erase("model");
  t["init_seed"] = cfg.train.init_seed;
  t["holdout_fraction"] = cfg.train.holdout_fraction;
  t["eval_every"] = cfg.train.eval_every;
  t["eval_scenes"] = cfg.train.eval_scenes;
  t["log_every"] = cfg.train.log_every;
  j["train"] = t;
  j["eval"] = {{"sigma_h", cfg.eval.sigma_h},
               {"samples_per_scene", cfg.eval.samples_per_scene},
               {"seed", cfg.eval.seed},
               {"threads", cfg.eval.threads},
               {"overlays", cfg.overlays}};
  j["curation"] = {{"max_components", cfg.curation.options.max_components},
                   {"object_point_stride", cfg.curation.options.object_point_stride},
                   {"success_threshold", cfg.curation.success_threshold},
                   {"sigma_d", cfg.curation.options.grip.sigma_d},
                   {"contact_radius", cfg.curation.options.grip.contact_radius},
                   {"proximity_weight", cfg.curation.options.grip.proximity_weight}};
  j["paths"] = {{"dataset", cfg.paths.dataset}, {"model", cfg.paths.model}, {"out", cfg.paths.out}};
  return j.dump(2);
}

}  // namespace afford
