#include "afford/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "afford/error.hpp"

namespace afford {

namespace {

void require_nonempty(const Mask& mask) {
  if (mask.count() == 0) fail(ErrorCode::kEmptyMask, "ground-truth mask is empty");
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace

int success_rate(PixelPoint pred, const Mask& mask) {
  if (!std::isfinite(pred.u) || !std::isfinite(pred.v)) fail(ErrorCode::kInvalidArgument, "prediction is not finite");
  require_nonempty(mask);
  return mask.contains(pred.col(), pred.row()) ? 1 : 0;
}

std::vector<double> saliency_map(std::span<const PixelPoint> points, int width, int height, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "saliency sigma must be positive");
  std::vector<double> map(static_cast<size_t>(width) * height, 0.0);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const PixelPoint& p : points) {
    // Separable: exp(-(dx^2 + dy^2) k) = exp(-dx^2 k) exp(-dy^2 k).
    std::vector<double> gx(width);
    std::vector<double> gy(height);
    for (int c = 0; c < width; ++c) gx[c] = std::exp(-(c - p.u) * (c - p.u) * inv);
    for (int r = 0; r < height; ++r) gy[r] = std::exp(-(r - p.v) * (r - p.v) * inv);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) map[static_cast<size_t>(r) * width + c] += gy[r] * gx[c];
    }
  }
  return map;
}

double nss_from_map(std::span<const double> map, const Mask& mask) {
  require_nonempty(mask);
  if (map.size() != mask.values.size()) fail(ErrorCode::kDimensionMismatch, "saliency map and mask sizes differ");
  const double n = static_cast<double>(map.size());
  double mean = 0.0;
  for (double s : map) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : map) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-12) return 0.0;
  double sum = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < map.size(); ++i) {
    if (mask.values[i]) {
      sum += (map[i] - mean) / sd;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

double nss(std::span<const PixelPoint> points, const Mask& mask, double sigma) {
  require_nonempty(mask);
  if (points.empty()) fail(ErrorCode::kInvalidArgument, "NSS needs at least one predicted point");
  const auto map = saliency_map(points, mask.width, mask.height, sigma);
  return nss_from_map(map, mask);
}

double dtm(PixelPoint pred, const Mask& mask) {
  if (success_rate(pred, mask) == 1) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(c, r)) continue;
      best = std::min(best, (c - pred.u) * (c - pred.u) + (r - pred.v) * (r - pred.v));
    }
  }
  return std::sqrt(best) / std::hypot(static_cast<double>(mask.width), static_cast<double>(mask.height));
}

double rotation_error(const Quaternion& pred, const Quaternion& gt) { return geodesic_angle(pred, gt); }

size_t medoid_index(std::span<const PoseCenteredAffordance> samples) {
  if (samples.empty()) fail(ErrorCode::kInvalidArgument, "no samples");
  size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < samples.size(); ++i) {
    double cost = 0.0;
    for (const auto& s : samples) {
      cost += std::hypot(samples[i].contact_point.u - s.contact_point.u, samples[i].contact_point.v - s.contact_point.v);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = i;
    }
  }
  return best;
}

EvalRow score_record(const SampleRecord& record, std::span<const PoseCenteredAffordance> samples, double sigma_h) {
  const PoseCenteredAffordance& pick = samples[medoid_index(samples)];
  std::vector<PixelPoint> points;
  for (const auto& s : samples) points.push_back(s.contact_point);
  EvalRow row;
  row.id = record.id;
  row.instruction_id = record.instruction_id;
  row.pred = pick.contact_point;
  row.sr = success_rate(pick.contact_point, record.mask);
  row.nss = nss(points, record.mask, sigma_h);
  row.dtm = dtm(pick.contact_point, record.mask);
  row.rot_err = rotation_error(pick.orientation, record.gt.orientation);
  return row;
}

EvalSummary summarize(std::span<const EvalRow> rows, std::span<const SampleRecord> records) {
  EvalSummary s;
  s.count = rows.size();
  if (rows.empty()) return s;
  std::vector<double> rot;
  for (const auto& r : rows) {
    s.sr += r.sr;
    s.nss += r.nss;
    s.dtm += r.dtm;
    s.rot_err += r.rot_err;
    rot.push_back(r.rot_err);
  }
  const double n = static_cast<double>(rows.size());
  s.sr /= n;
  s.nss /= n;
  s.dtm /= n;
  s.rot_err /= n;
  std::sort(rot.begin(), rot.end());
  s.rot_err_median = rot.size() % 2 ? rot[rot.size() / 2] : 0.5 * (rot[rot.size() / 2 - 1] + rot[rot.size() / 2]);
  for (const auto& r : records) s.chance += r.mask.area_fraction();
  if (!records.empty()) s.chance /= static_cast<double>(records.size());
  return s;
}

EvalResult evaluate_model(const ModelParams& params, std::span<const SampleRecord> records,
                          const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot, const EvalConfig& cfg,
                          std::vector<std::vector<PoseCenteredAffordance>>* samples_out) {
  if (cfg.samples_per_scene < 1) fail(ErrorCode::kBadParams, "samples_per_scene must be positive");
  for (const auto& r : records) {
    if (r.width() % params.config.patch_size != 0 || r.height() % params.config.patch_size != 0) {
      fail(ErrorCode::kShapeMismatch, "record " + r.id + " does not tile into the model's patches");
    }
  }
  EvalResult result;
  result.rows.resize(records.size());
  std::vector<std::vector<PoseCenteredAffordance>> samples(records.size());
  auto work = [&](size_t i) {
    const SampleRecord& r = records[i];
    SceneContext ctx(params, tokenize_scene(r.frame, r.mask, params), r.instruction_id);
    samples[i] = sample_many(ctx.predictor(sched_loc.n_steps()), sched_loc, sched_rot, r.width(), r.height(),
                             mix_seed(cfg.seed, i), cfg.samples_per_scene);
    result.rows[i] = score_record(r, samples[i], cfg.sigma_h);
  };
  const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(records.size())));
  if (threads == 1) {
    for (size_t i = 0; i < records.size(); ++i) work(i);
  } else {
    // Static striping: every slot is written by exactly one worker, aggregation happens afterwards in order.
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (size_t i = t; i < records.size(); i += threads) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  result.summary = summarize(result.rows, records);
  if (samples_out) *samples_out = std::move(samples);
  return result;
}

EvalResult evaluate_oracle(std::span<const SampleRecord> records, const EvalConfig& cfg) {
  EvalResult result;
  for (const auto& r : records) {
    const std::vector<PoseCenteredAffordance> samples(std::max(1, cfg.samples_per_scene), r.gt);
    result.rows.push_back(score_record(r, samples, cfg.sigma_h));
  }
  result.summary = summarize(result.rows, records);
  return result;
}

void write_report_json(const EvalResult& r, const std::filesystem::path& path, const std::string& extra_json) {
  constexpr double kToDeg = 180.0 / std::numbers::pi;
  nlohmann::json j;
  j["count"] = r.summary.count;
  j["sr"] = r.summary.sr;
  j["nss"] = r.summary.nss;
  j["dtm"] = r.summary.dtm;
  j["rot_err_mean_deg"] = r.summary.rot_err * kToDeg;
  j["rot_err_median_deg"] = r.summary.rot_err_median * kToDeg;
  j["chance_sr"] = r.summary.chance;
  j["sr_above_chance"] = r.summary.sr - r.summary.chance;
  nlohmann::json per_instruction = nlohmann::json::object();
  for (int id = 0; id < kNumInstructions; ++id) {
    double sr = 0.0;
    int n = 0;
    for (const auto& row : r.rows) {
      if (row.instruction_id == id) {
        sr += row.sr;
        ++n;
      }
    }
    if (n) per_instruction[std::string(instruction_text(id))] = {{"count", n}, {"sr", sr / n}};
  }
  j["per_instruction"] = per_instruction;
  j["run"] = nlohmann::json::parse(extra_json);
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIoError, "cannot write " + path.string());
  os << j.dump(2) << "\n";
}

std::string report_text(const EvalResult& r) {
  constexpr double kToDeg = 180.0 / std::numbers::pi;
  const EvalSummary& s = r.summary;
  std::ostringstream os;
  os << "metric              value\n";
  os << "scenes              " << s.count << "\n";
  os << "SR                  " << fixed(s.sr, 4) << "\n";
  os << "chance SR           " << fixed(s.chance, 4) << "\n";
  os << "NSS                 " << fixed(s.nss, 4) << "\n";
  os << "DTM                 " << fixed(s.dtm, 5) << "\n";
  os << "rot err mean (deg)  " << fixed(s.rot_err * kToDeg, 2) << "\n";
  os << "rot err med (deg)   " << fixed(s.rot_err_median * kToDeg, 2) << "\n";
  return os.str();
}

void write_report_csv(const EvalResult& r, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIoError, "cannot write " + path.string());
  os << "id,instruction_id,pred_u,pred_v,sr,nss,dtm,rot_err\n";
  for (const auto& row : r.rows) {
    os << row.id << ',' << row.instruction_id << ',' << fixed(row.pred.u, 4) << ',' << fixed(row.pred.v, 4) << ','
       << row.sr << ',' << fixed(row.nss, 9) << ',' << fixed(row.dtm, 9) << ',' << fixed(row.rot_err, 9) << "\n";
  }
}

void write_overlay_ppm(const SampleRecord& record, std::span<const PoseCenteredAffordance> samples, double sigma_h,
                       const std::filesystem::path& path) {
  std::vector<PixelPoint> points;
  for (const auto& s : samples) points.push_back(s.contact_point);
  const auto map = saliency_map(points, record.width(), record.height(), sigma_h);
  const double peak = std::max(*std::max_element(map.begin(), map.end()), 1e-12);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::kIoError, "cannot write " + path.string());
  os << "P6\n" << record.width() << " " << record.height() << "\n255\n";
  for (int r = 0; r < record.height(); ++r) {
    for (int c = 0; c < record.width(); ++c) {
      const size_t i = static_cast<size_t>(r) * record.width() + c;
      const double a = 0.7 * map[i] / peak;
      double rgb[3];
      for (int ch = 0; ch < 3; ++ch) rgb[ch] = record.frame.rgb[i * 3 + ch] * (1.0 - a);
      rgb[0] += 255.0 * a;
      const bool edge = record.mask.at(c, r) && (!record.mask.contains(c - 1, r) || !record.mask.contains(c + 1, r) ||
                                                 !record.mask.contains(c, r - 1) || !record.mask.contains(c, r + 1));
      if (edge) {
        rgb[0] = 0;
        rgb[1] = 255;
        rgb[2] = 0;
      }
      for (double v : rgb) os.put(static_cast<char>(static_cast<uint8_t>(std::clamp(v, 0.0, 255.0))));
    }
  }
}

}  // namespace afford
