// afford: dataset generation, curation, training and evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "afford/config.hpp"
#include "afford/dataset.hpp"
#include "afford/error.hpp"
#include "afford/evalkit.hpp"
#include "afford/geometry.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace afford;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Options {
  std::string config;
  std::string dataset;
  std::string model;
  std::string out;
  std::optional<uint64_t> seed;
  bool oracle = false;
};

/// Thrown for input problems that map to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_config(const Options& o, bool required) {
  if (o.config.empty()) {
    if (required) throw UsageError("--config is required");
    return RunConfig{};
  }
  if (!fs::exists(o.config)) throw UsageError("config file not found: " + o.config);
  try {
    return load_run_config(o.config);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::string pick(const std::string& flag, const std::string& from_config, const char* what) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  throw UsageError(std::string("no ") + what + " given (flag or paths section)");
}

std::vector<SampleRecord> load_records(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("dataset directory not found: " + dir);
  try {
    return read_dataset(dir);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

int env_threads(int fallback) {
  if (const char* s = std::getenv("AFFORD_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(s, &end, 10);
    if (end != s && *end == '\0' && n >= 1 && n <= 1024) return static_cast<int>(n);
    throw UsageError(std::string("AFFORD_THREADS must be a positive integer, got '") + s + "'");
  }
  return fallback;
}

double deg(double rad) { return rad * 180.0 / M_PI; }

int cmd_gen(const Options& o) {
  RunConfig cfg = load_config(o, true);
  const std::string out = pick(o.out, cfg.paths.dataset, "output directory");
  const uint64_t seed = o.seed.value_or(cfg.gen.seed);

  std::vector<SampleRecord> records = generate_dataset(cfg.gen.generator, cfg.gen.count, seed, cfg.gen.id_prefix);
  if (cfg.gen.robot_count > 0) {
    GeneratorConfig robot = cfg.gen.generator;
    robot.provenance = Provenance::kRobot;
    auto extra = generate_dataset(robot, cfg.gen.robot_count, mix_seed(seed, 101), cfg.gen.id_prefix + "robot_");
    records.insert(records.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  }

  size_t valid = 0;
  std::map<int, size_t> per_instruction;
  size_t with_intermediates = 0;
  double mask_fraction = 0.0;
  for (const auto& r : records) {
    r.validate();
    ++valid;
    ++per_instruction[r.instruction_id];
    if (r.intermediates) ++with_intermediates;
    mask_fraction += r.mask.area_fraction();
  }
  write_dataset(records, out);

  std::cout << "wrote " << records.size() << " records to " << out << "\n";
  std::cout << "invariant checks: " << valid << "/" << records.size() << " valid, " << with_intermediates
            << " with curation intermediates\n";
  std::cout << "mean mask fraction: " << std::fixed << std::setprecision(4)
            << (records.empty() ? 0.0 : mask_fraction / static_cast<double>(records.size())) << "\n";
  for (const auto& [id, n] : per_instruction) {
    std::cout << "  instruction " << id << " (" << instruction_text(id) << "): " << n << "\n";
  }
  return kOk;
}

int cmd_curate(const Options& o) {
  const RunConfig cfg = load_config(o, false);
  const std::string dir = pick(o.dataset, cfg.paths.dataset, "dataset directory");
  std::vector<SampleRecord> records = load_records(dir);
  const std::string out = o.out.empty() ? dir : o.out;

  size_t eligible = 0, skipped = 0;
  std::vector<std::string> failed;
  std::vector<double> point_err, rot_err;
  for (auto& r : records) {
    if (!r.intermediates) {
      ++skipped;
      continue;
    }
    ++eligible;
    try {
      const PoseCenteredAffordance a = curate(r, cfg.curation.options);
      point_err.push_back(std::hypot(a.contact_point.u - r.gt.contact_point.u, a.contact_point.v - r.gt.contact_point.v));
      rot_err.push_back(rotation_error(a.orientation, r.gt.orientation));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kCurationFailed) throw;
      failed.push_back(r.id);
      std::cerr << e.what() << "\n";
    }
  }
  write_dataset(records, out);

  auto stats = [](std::vector<double> v, double scale, const char* unit) {
    std::ostringstream s;
    if (v.empty()) return std::string("n/a");
    std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    s << std::fixed << std::setprecision(3) << "mean " << mean * scale << unit << ", median "
      << v[v.size() / 2] * scale << unit << ", max " << v.back() * scale << unit;
    return s.str();
  };
  const size_t ok = eligible - failed.size();
  const double frac = eligible ? static_cast<double>(ok) / static_cast<double>(eligible) : 1.0;
  std::cout << "curated " << ok << "/" << eligible << " eligible records (" << std::fixed << std::setprecision(1)
            << 100.0 * frac << "%), skipped " << skipped << " without demonstration data\n";
  std::cout << "contact point error vs gt: " << stats(point_err, 1.0, " px") << "\n";
  std::cout << "orientation error vs gt: " << stats(rot_err, 180.0 / M_PI, " deg") << "\n";
  std::cout << "wrote labels to " << out << "\n";
  if (!failed.empty()) {
    std::cout << "failed ids:";
    for (const auto& id : failed) std::cout << " " << id;
    std::cout << "\n";
  }
  if (frac < cfg.curation.success_threshold) {
    std::cerr << "curation success " << frac << " below threshold " << cfg.curation.success_threshold << "\n";
    return kRuntime;
  }
  return kOk;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

int cmd_train(const Options& o) {
  RunConfig cfg = load_config(o, true);
  const std::string dir = pick(o.dataset, cfg.paths.dataset, "dataset directory");
  const std::string out = pick(o.out.empty() ? o.model : o.out, cfg.paths.model, "output model path");
  if (o.seed) cfg.train.train.seed = *o.seed;
  const std::vector<SampleRecord> records = load_records(dir);
  if (records.empty()) throw UsageError("dataset " + dir + " has no records");

  const size_t n_hold = static_cast<size_t>(std::floor(cfg.train.holdout_fraction * static_cast<double>(records.size())));
  if (n_hold >= records.size()) throw UsageError("holdout leaves no training records");
  const std::span<const SampleRecord> train_set(records.data(), records.size() - n_hold);
  const std::span<const SampleRecord> holdout(records.data() + (records.size() - n_hold), n_hold);

  const TrainConfig& tc = cfg.train.train;
  const DiffusionSchedule sl = cfg.schedules.build_loc();
  const DiffusionSchedule sr = cfg.schedules.build_rot();

  EvalConfig ec = cfg.eval;
  ec.threads = env_threads(ec.threads);

  const fs::path loss_path = fs::path(out).string() + ".loss.csv";
  const fs::path eval_path = fs::path(out).string() + ".eval.csv";
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream loss_csv(loss_path);
  loss_csv << "step,lr,loss\n";
  std::ofstream eval_csv;
  const bool periodic = cfg.train.eval_every > 0 && n_hold > 0;
  if (periodic) {
    eval_csv.open(eval_path);
    eval_csv << "step,count,sr,nss,dtm,rot_err_median_deg\n";
  }
  std::cout << "training on " << train_set.size() << " records, holding out " << n_hold << "\n";

  auto on_step = [&](int s, double lr, double loss, const ModelParams& params) {
    loss_csv << s << "," << fmt(lr) << "," << fmt(loss) << "\n";
    if (s % cfg.train.log_every == 0 || s == 1 || s == tc.steps) {
      std::cout << "step " << s << " loss " << fmt(loss) << " lr " << fmt(lr) << "\n" << std::flush;
    }
    if (periodic && (s % cfg.train.eval_every == 0 || s == tc.steps)) {
      const size_t n = std::min<size_t>(holdout.size(), static_cast<size_t>(cfg.train.eval_scenes));
      const EvalResult r = evaluate_model(params, holdout.first(n), sl, sr, ec);
      eval_csv << s << "," << r.summary.count << "," << fmt(r.summary.sr) << "," << fmt(r.summary.nss) << ","
               << fmt(r.summary.dtm) << "," << fmt(deg(r.summary.rot_err_median)) << "\n";
      std::cout << "  held-out @" << s << ": SR " << fmt(r.summary.sr) << " DTM " << fmt(r.summary.dtm)
                << " rot median " << fmt(deg(r.summary.rot_err_median)) << " deg\n" << std::flush;
    }
  };
  ModelParams trained;
  try {
    trained = train_model(train_set, tc, cfg.train.init_seed, sl, sr, on_step);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFiniteLoss) throw;
    loss_csv.flush();
    std::cerr << "training aborted: " << e.what() << "\n";
    return kRuntime;
  }
  save_params(trained, out);
  std::cout << "wrote " << out << " and " << loss_path.string() << "\n";
  return kOk;
}

int cmd_eval(const Options& o) {
  RunConfig cfg = load_config(o, false);
  const std::string dir = pick(o.dataset, cfg.paths.dataset, "dataset directory");
  const std::string out = pick(o.out, cfg.paths.out, "report path");
  if (o.seed) cfg.eval.seed = *o.seed;
  cfg.eval.threads = env_threads(cfg.eval.threads);
  const std::vector<SampleRecord> records = load_records(dir);
  if (records.empty()) throw UsageError("dataset " + dir + " has no records");

  std::optional<ModelParams> params;
  std::string model_name = "oracle";
  if (!o.oracle) {
    const std::string model = pick(o.model, cfg.paths.model, "model file (or --oracle)");
    if (!fs::exists(model)) throw UsageError("model file not found: " + model);
    try {
      params = load_params(model);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    model_name = model;
    const int p = params->config.patch_size;
    for (const auto& r : records) {
      if (r.width() % p != 0 || r.height() % p != 0) {
        fail(ErrorCode::kShapeMismatch, "record " + r.id + " is " + std::to_string(r.width()) + "x" +
                                            std::to_string(r.height()) + ", not a multiple of the model patch size " +
                                            std::to_string(p));
      }
    }
  }

  std::vector<std::vector<PoseCenteredAffordance>> samples;
  const EvalResult result =
      params ? evaluate_model(*params, records, cfg.schedules.build_loc(), cfg.schedules.build_rot(), cfg.eval, &samples)
             : evaluate_oracle(records, cfg.eval);
  if (!params) {
    for (const auto& r : records) samples.push_back({r.gt});
  }

  nlohmann::json run = {{"model", model_name},
                        {"dataset", dir},
                        {"samples_per_scene", cfg.eval.samples_per_scene},
                        {"sigma_h", cfg.eval.sigma_h},
                        {"seed", cfg.eval.seed}};
  const fs::path json_path(out);
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  write_report_json(result, json_path, run.dump());
  fs::path txt = json_path;
  txt.replace_extension(".txt");
  std::ofstream(txt) << report_text(result);
  fs::path csv = json_path;
  csv.replace_extension(".csv");
  write_report_csv(result, csv);
  const int n_overlay = std::min<int>(cfg.overlays, static_cast<int>(records.size()));
  for (int i = 0; i < n_overlay; ++i) {
    fs::path ppm = json_path.parent_path() / (records[i].id + ".overlay.ppm");
    write_overlay_ppm(records[i], samples[i], cfg.eval.sigma_h, ppm);
  }
  std::cout << report_text(result);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"afford: pose-centered affordance toolkit"};
  app.require_subcommand(1);
  Options o;
  uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool with_model, bool with_oracle) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--dataset", o.dataset, "dataset directory");
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--seed", seed, "override the configured seed");
    if (with_model) sub->add_option("--model", o.model, "parameter file");
    if (with_oracle) sub->add_flag("--oracle", o.oracle, "score ground truth in place of a model");
  };
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, false, false);
  CLI::App* cur = app.add_subcommand("curate", "extract labels from demonstration data");
  add_common(cur, false, false);
  CLI::App* train = app.add_subcommand("train", "train the denoiser");
  add_common(train, true, false);
  CLI::App* ev = app.add_subcommand("eval", "sample and score a model");
  add_common(ev, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  for (CLI::App* sub : {gen, cur, train, ev}) {
    if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (cur->parsed()) return cmd_curate(o);
    if (train->parsed()) return cmd_train(o);
    return cmd_eval(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
