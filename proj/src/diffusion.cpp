#include "afford/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "afford/error.hpp"

namespace afford {

DiffusionSchedule::DiffusionSchedule(ScheduleKind kind, std::vector<double> betas) : kind_(kind), betas_(std::move(betas)) {
  if (betas_.empty()) fail(ErrorCode::kBadParams, "schedule needs at least one step");
  double running = 1.0;
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) fail(ErrorCode::kBadParams, "beta outside (0, 1)");
    alphas_.push_back(1.0 - b);
    running *= 1.0 - b;
    alpha_bars_.push_back(running);
  }
}

DiffusionSchedule build_schedule(ScheduleKind kind, int n_steps, const ScheduleParams& params) {
  if (n_steps < 1) fail(ErrorCode::kBadParams, "n_steps must be >= 1");
  std::vector<double> betas(n_steps);
  if (kind == ScheduleKind::kScaledLinear) {
    const double b0 = params.beta_start;
    const double b1 = params.beta_end;
    if (!(b0 > 0.0 && b0 < b1 && b1 < 1.0)) fail(ErrorCode::kBadParams, "need 0 < beta_start < beta_end < 1");
    const double lo = std::sqrt(b0);
    const double hi = std::sqrt(b1);
    const double denom = std::max(n_steps - 1, 1);
    for (int i = 1; i <= n_steps; ++i) {
      const double s = lo + (i - 1) / denom * (hi - lo);
      betas[i - 1] = s * s;
    }
  } else {
    const double s = params.cosine_offset;
    if (!(s > 0.0 && s <= 0.1)) fail(ErrorCode::kBadParams, "cosine offset must lie in (0, 0.1]");
    auto f = [&](double t) {
      const double c = std::cos((t / n_steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    const double f0 = f(0.0);
    double prev = 1.0;
    for (int i = 1; i <= n_steps; ++i) {
      const double ab = f(i) / f0;
      betas[i - 1] = std::clamp(1.0 - ab / prev, 1e-12, 0.999);
      prev = ab;
    }
  }
  // alpha_bar is recomputed from the (clipped) betas, so the recurrence holds exactly.
  return DiffusionSchedule(kind, std::move(betas));
}

namespace {

void check_step(int step, const DiffusionSchedule& loc, const DiffusionSchedule& rot) {
  if (step < 1 || step > loc.n_steps() || step > rot.n_steps()) {
    fail(ErrorCode::kStepOutOfRange, "diffusion step " + std::to_string(step) + " out of range");
  }
}

template <typename V>
V reverse_component(const V& a, const V& pred, const V& z, const DiffusionSchedule& s, int i) {
  const double beta = s.beta(i);
  const double ab = s.alpha_bar(i);
  const V mean = (a - (beta / std::sqrt(1.0 - ab)) * pred) / std::sqrt(s.alpha(i));
  if (i == 1) return mean;
  const double var = (1.0 - s.alpha_bar(i - 1)) / (1.0 - ab) * beta;
  return mean + std::sqrt(var) * z;
}

}  // namespace

AffordanceLatent forward_noise(const AffordanceLatent& a0, int step, const DiffusionSchedule& sched_loc,
                               const DiffusionSchedule& sched_rot, const NoisePair& eps) {
  check_step(step, sched_loc, sched_rot);
  const double abl = sched_loc.alpha_bar(step);
  const double abr = sched_rot.alpha_bar(step);
  AffordanceLatent out;
  out.loc = std::sqrt(abl) * a0.loc + std::sqrt(1.0 - abl) * eps.eps_loc;
  out.rot = std::sqrt(abr) * a0.rot + std::sqrt(1.0 - abr) * eps.eps_rot;
  return out;
}

double noise_loss(const NoisePair& pred, const NoisePair& target, const LossWeights& w) {
  return w.w_loc * (pred.eps_loc - target.eps_loc).cwiseAbs().mean() +
         w.w_rot * (pred.eps_rot - target.eps_rot).cwiseAbs().mean();
}

AffordanceLatent ddpm_step(const AffordanceLatent& a_i, int step, const NoisePair& pred,
                           const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot, const NoisePair& z) {
  check_step(step, sched_loc, sched_rot);
  AffordanceLatent out;
  out.loc = reverse_component(a_i.loc, pred.eps_loc, z.eps_loc, sched_loc, step);
  out.rot = reverse_component(a_i.rot, pred.eps_rot, z.eps_rot, sched_rot, step);
  return out;
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  // splitmix64 finalizer over the combined words
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::Vector2d normalize_loc(PixelPoint c, int width, int height) {
  return {(2.0 * c.u + 1.0) / width - 1.0, (2.0 * c.v + 1.0) / height - 1.0};
}

PixelPoint denormalize_loc(const Eigen::Vector2d& loc, int width, int height) {
  return {((loc.x() + 1.0) * width - 1.0) / 2.0, ((loc.y() + 1.0) * height - 1.0) / 2.0};
}

AffordanceLatent encode_affordance(const PoseCenteredAffordance& a, int width, int height) {
  AffordanceLatent out;
  out.loc = normalize_loc(a.contact_point, width, height);
  const Rot6D r = quat_to_rot6d(a.orientation.normalized());
  out.rot << r.a1, r.a2;
  return out;
}

PoseCenteredAffordance decode_affordance(const AffordanceLatent& latent, int width, int height) {
  PoseCenteredAffordance a;
  const PixelPoint raw = denormalize_loc(latent.loc, width, height);
  a.contact_point = {std::clamp(raw.u, 0.0, width - 1.0), std::clamp(raw.v, 0.0, height - 1.0)};
  if (!latent.rot.allFinite()) fail(ErrorCode::kDegenerateRotation, "rotation latent is not finite");
  const Rot6D r{latent.rot.head<3>(), latent.rot.tail<3>()};
  try {
    a.orientation = rot6d_to_quat(r);
  } catch (const Error& e) {
    fail(ErrorCode::kDegenerateRotation, e.what());
  }
  return a;
}

std::vector<PoseCenteredAffordance> sample_many(const NoisePredictor& model, const DiffusionSchedule& sched_loc,
                                                const DiffusionSchedule& sched_rot, int width, int height,
                                                uint64_t seed, int count) {
  if (sched_loc.n_steps() != sched_rot.n_steps()) fail(ErrorCode::kBadParams, "schedules must share N");
  if (count < 1) return {};
  const int n = sched_loc.n_steps();
  std::vector<std::mt19937_64> rngs;
  for (int j = 0; j < count; ++j) rngs.emplace_back(mix_seed(seed, j));
  auto draw = [](std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    NoisePair z;
    for (int d = 0; d < 2; ++d) z.eps_loc(d) = gauss(rng);
    for (int d = 0; d < 6; ++d) z.eps_rot(d) = gauss(rng);
    return z;
  };

  std::vector<AffordanceLatent> state(count);
  for (int j = 0; j < count; ++j) {
    const NoisePair init = draw(rngs[j]);
    state[j].loc = init.eps_loc;
    state[j].rot = init.eps_rot;
  }
  for (int i = n; i >= 1; --i) {
    const std::vector<NoisePair> pred = model(state, i);
    if (pred.size() != state.size()) fail(ErrorCode::kDimensionMismatch, "noise predictor returned wrong batch size");
    for (int j = 0; j < count; ++j) {
      const NoisePair z = i > 1 ? draw(rngs[j]) : NoisePair{};
      state[j] = ddpm_step(state[j], i, pred[j], sched_loc, sched_rot, z);
    }
  }
  std::vector<PoseCenteredAffordance> out;
  out.reserve(count);
  for (const auto& s : state) out.push_back(decode_affordance(s, width, height));
  return out;
}

PoseCenteredAffordance sample(const NoisePredictor& model, const DiffusionSchedule& sched_loc,
                              const DiffusionSchedule& sched_rot, int width, int height, uint64_t seed) {
  return sample_many(model, sched_loc, sched_rot, width, height, seed, 1).front();
}

}  // namespace afford
