#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "afford/denoiser.hpp"
#include "afford/diffusion.hpp"
#include "afford/record.hpp"

namespace afford {

/// 1 iff the nearest integer pixel of `pred` lies in the mask. Throws EmptyMask.
int success_rate(PixelPoint pred, const Mask& mask);

/// Sum of isotropic Gaussians centered at `points`, evaluated at every pixel center (row-major).
std::vector<double> saliency_map(std::span<const PixelPoint> points, int width, int height, double sigma);

/// Mean z-normalized saliency over mask pixels; 0 for a constant map.
double nss_from_map(std::span<const double> map, const Mask& mask);

double nss(std::span<const PixelPoint> points, const Mask& mask, double sigma = 8.0);

/// Distance to the nearest mask pixel over the image diagonal; 0 when the prediction counts as a success.
double dtm(PixelPoint pred, const Mask& mask);

/// Geodesic angle in [0, pi].
double rotation_error(const Quaternion& pred, const Quaternion& gt);

struct EvalRow {
  std::string id;
  int instruction_id = 0;
  PixelPoint pred;
  int sr = 0;
  double nss = 0.0;
  double dtm = 0.0;
  double rot_err = 0.0;  // rad
};

struct EvalSummary {
  size_t count = 0;
  double sr = 0.0;
  double nss = 0.0;
  double dtm = 0.0;
  double rot_err = 0.0;         // mean, rad
  double rot_err_median = 0.0;  // rad
  double chance = 0.0;          // mean mask-area fraction
};

struct EvalResult {
  std::vector<EvalRow> rows;
  EvalSummary summary;
};

struct EvalConfig {
  int samples_per_scene = 8;
  double sigma_h = 8.0;
  uint64_t seed = 0;
  int threads = 1;
};

/// Index of the sample minimizing the summed pixel distance to the others.
size_t medoid_index(std::span<const PoseCenteredAffordance> samples);

/// Scores one record from its samples: the medoid is the point prediction, all samples form the NSS map.
EvalRow score_record(const SampleRecord& record, std::span<const PoseCenteredAffordance> samples,
                     double sigma_h);

/// Aggregates rows; chance comes from the records' mask fractions.
EvalSummary summarize(std::span<const EvalRow> rows, std::span<const SampleRecord> records);

/// Samples every record with the model. Scenes run on `threads` workers; results do not depend on it.
EvalResult evaluate_model(const ModelParams& params, std::span<const SampleRecord> records,
                          const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot,
                          const EvalConfig& cfg, std::vector<std::vector<PoseCenteredAffordance>>* samples = nullptr);

/// Ground-truth passthrough in place of a model.
EvalResult evaluate_oracle(std::span<const SampleRecord> records, const EvalConfig& cfg);

void write_report_json(const EvalResult& r, const std::filesystem::path& path, const std::string& extra_json = "{}");
std::string report_text(const EvalResult& r);
void write_report_csv(const EvalResult& r, const std::filesystem::path& path);

/// Binary PPM of the frame with the saliency map blended in red and the mask outline in green.
void write_overlay_ppm(const SampleRecord& record, std::span<const PoseCenteredAffordance> samples, double sigma_h,
                       const std::filesystem::path& path);

}  // namespace afford
