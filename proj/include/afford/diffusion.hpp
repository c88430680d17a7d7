#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "afford/geometry.hpp"

namespace afford {

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Diffusion state: contact point normalized to [-1, 1] per axis plus the flattened 6D rotation.
struct AffordanceLatent {
  Eigen::Vector2d loc = Eigen::Vector2d::Zero();
  Vec6 rot = Vec6::Zero();
};

struct NoisePair {
  Eigen::Vector2d eps_loc = Eigen::Vector2d::Zero();
  Vec6 eps_rot = Vec6::Zero();
};

struct LossWeights {
  double w_loc = 1.0;
  double w_rot = 1.0;
};

enum class ScheduleKind { kScaledLinear, kSquaredCosine };

struct ScheduleParams {
  double beta_start = 8.5e-4;
  double beta_end = 0.012;
  double cosine_offset = 0.008;
};

/// beta/alpha/alpha_bar for steps 1..N. Step 0 is the clean sample with alpha_bar = 1.
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  DiffusionSchedule(ScheduleKind kind, std::vector<double> betas);

  ScheduleKind kind() const { return kind_; }
  int n_steps() const { return static_cast<int>(betas_.size()); }
  double beta(int i) const { return betas_.at(i - 1); }
  double alpha(int i) const { return alphas_.at(i - 1); }
  /// Defined for i in [0, N].
  double alpha_bar(int i) const { return i == 0 ? 1.0 : alpha_bars_.at(i - 1); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  ScheduleKind kind_ = ScheduleKind::kScaledLinear;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

DiffusionSchedule build_schedule(ScheduleKind kind, int n_steps, const ScheduleParams& params = {});

AffordanceLatent forward_noise(const AffordanceLatent& a0, int step, const DiffusionSchedule& sched_loc,
                               const DiffusionSchedule& sched_rot, const NoisePair& eps);

/// w_loc * mean|loc residual| + w_rot * mean|rot residual|.
double noise_loss(const NoisePair& pred, const NoisePair& target, const LossWeights& w);

/// One reverse step i -> i-1 using the posterior variance; no noise is injected at i = 1.
AffordanceLatent ddpm_step(const AffordanceLatent& a_i, int step, const NoisePair& pred,
                           const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot, const NoisePair& z);

/// Maps a whole batch of chain states at one step to noise predictions. Conditioning is bound
/// inside the callable.
using NoisePredictor = std::function<std::vector<NoisePair>(std::span<const AffordanceLatent>, int step)>;

/// Runs `count` independent reverse chains in lockstep. Chain j depends only on (seed, j), so chain 0
/// of a batched call equals a single-chain call with the same seed.
std::vector<PoseCenteredAffordance> sample_many(const NoisePredictor& model, const DiffusionSchedule& sched_loc,
                                                const DiffusionSchedule& sched_rot, int width, int height,
                                                uint64_t seed, int count);

PoseCenteredAffordance sample(const NoisePredictor& model, const DiffusionSchedule& sched_loc,
                              const DiffusionSchedule& sched_rot, int width, int height, uint64_t seed);

Eigen::Vector2d normalize_loc(PixelPoint c, int width, int height);
PixelPoint denormalize_loc(const Eigen::Vector2d& loc, int width, int height);

AffordanceLatent encode_affordance(const PoseCenteredAffordance& a, int width, int height);

/// Clamps the contact point to the image and re-orthonormalizes the rotation;
/// throws DegenerateRotation when the 6-vector has no valid Gram-Schmidt frame.
PoseCenteredAffordance decode_affordance(const AffordanceLatent& latent, int width, int height);

/// Stream seed for chain/record j derived from a base seed.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

}  // namespace afford
