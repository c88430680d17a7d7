#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "afford/denoiser.hpp"
#include "afford/diffusion.hpp"
#include "afford/evalkit.hpp"
#include "afford/synth.hpp"

namespace afford {

struct GenSection {
  GeneratorConfig generator;
  int count = 100;
  int robot_count = 0;  // extra records with robot provenance and no demonstration data
  uint64_t seed = 0;
  std::string id_prefix = "rec_";
};

struct ScheduleSection {
  int n_steps = 100;
  ScheduleKind loc_kind = ScheduleKind::kScaledLinear;
  ScheduleParams loc;
  ScheduleKind rot_kind = ScheduleKind::kSquaredCosine;
  ScheduleParams rot;

  DiffusionSchedule build_loc() const { return build_schedule(loc_kind, n_steps, loc); }
  DiffusionSchedule build_rot() const { return build_schedule(rot_kind, n_steps, rot); }
};

struct TrainSection {
  TrainConfig train;
  uint64_t init_seed = 0;
  double holdout_fraction = 0.0;  // tail of the dataset kept out of training for periodic eval
  int eval_every = 0;             // 0 disables periodic eval
  int eval_scenes = 64;
  int log_every = 50;
};

struct CurationSection {
  CurationOptions options;
  double success_threshold = 0.9;
};

struct PathsSection {
  std::string dataset;
  std::string model;
  std::string out;
};

struct RunConfig {
  GenSection gen;
  ScheduleSection schedules;
  TrainSection train;
  EvalConfig eval;
  int overlays = 0;  // saliency overlay images written by eval, first N records
  CurationSection curation;
  PathsSection paths;

  void validate() const;
};

/// Parses JSON text. Errors are Config errors formatted as "<source>:<line>: <reason>".
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON of the effective configuration.
std::string run_config_json(const RunConfig& cfg);

}  // namespace afford
