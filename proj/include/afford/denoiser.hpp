#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "afford/autograd.hpp"
#include "afford/diffusion.hpp"
#include "afford/record.hpp"

namespace afford {

using MatrixF = ag::Matrix<float>;
using MatrixD = ag::Matrix<double>;

struct ModelConfig {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int patch_size = 8;
  int ff_mult = 2;
  int n_instructions = kNumInstructions;
  int step_embed_dim = 32;
  double max_depth = 2.0;  // m; depth / max_depth feeds the encoder
  double rope_min_wavelength = 16.0;  // px
  double rope_max_wavelength = 256.0;
  // Values are rotated into the key frame and back after aggregation, so relative offsets reach
  // the affordance token's state and not only the attention weights.
  bool rotary_values = true;
  // false: scene tokens attend among themselves only and the affordance token reads all of them.
  // Scene keys and values then stay fixed over the reverse chain and are computed once.
  bool scene_attends_affordance = false;
  // false: the masked-frame branch receives an all-zero frame (ablation).
  bool use_masked_branch = true;

  int head_dim() const { return d_model / n_heads; }
  int patch_dim() const { return 4 * patch_size * patch_size; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool decay = false;  // decoupled weight decay applies
};

/// Named tensors in declaration order; the order is also the on-disk order.
std::vector<TensorSpec> parameter_layout(const ModelConfig& cfg);

struct ModelParams {
  ModelConfig config;
  std::vector<TensorSpec> specs;
  std::vector<MatrixF> tensors;

  static ModelParams init(const ModelConfig& cfg, uint64_t seed);

  int index_of(const std::string& name) const;
  MatrixF& get(const std::string& name) { return tensors[index_of(name)]; }
  const MatrixF& get(const std::string& name) const { return tensors[index_of(name)]; }
  size_t scalar_count() const;
  bool all_finite() const;
  bool operator==(const ModelParams& o) const;
};

/// Zeroes the final layer of both output heads.
void zero_output_heads(ModelParams& p);

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int steps = 1000;
  int warmup_steps = 0;
  double min_lr_ratio = 1.0;  // cosine decay floor; 1 keeps the rate constant
  double grad_clip = 1.0;     // global norm; <= 0 disables
  int noise_draws = 1;        // (step, noise) draws per record sharing one scene pass
  LossWeights weights;
  uint64_t seed = 0;

  void validate() const;
};

/// One scene as tokens: P x d embeddings plus the patch-center pixel position of each row.
struct SceneTokens {
  MatrixF embeddings;
  std::vector<PixelPoint> positions;
  int width = 0;
  int height = 0;
};

/// P x 4p^2 patch matrix of the frame (rgb in [0,1], depth / max_depth clipped to [0,1]).
/// With a mask, every channel is multiplied by it.
MatrixF patchify(const RgbdFrame& frame, const Mask* mask, const ModelConfig& cfg);

/// Shared patch encoder applied to a patch matrix.
MatrixF encode_patches(const ModelParams& params, const MatrixF& patches);

SceneTokens tokenize_scene(const RgbdFrame& frame, const Mask& mask, const ModelParams& params);

/// Sinusoidal embedding of the step index.
Eigen::VectorXd step_embedding(int step, int dim);

/// Single-query prediction. `position_shift` translates every token position, scene and affordance alike.
NoisePair predict_noise(const ModelParams& params, const SceneTokens& scene, int instruction_id,
                        const AffordanceLatent& a_i, int step, int n_steps,
                        const Eigen::Vector2d& position_shift = Eigen::Vector2d::Zero());

/// Conditioning for a whole reverse chain: scene tokens plus, in cached mode, per-layer scene keys and values.
class SceneContext {
 public:
  SceneContext(const ModelParams& params, SceneTokens scene, int instruction_id,
               const Eigen::Vector2d& position_shift = Eigen::Vector2d::Zero());

  /// Batched prediction for `latents` sharing this scene.
  std::vector<NoisePair> predict(std::span<const AffordanceLatent> latents, int step, int n_steps) const;
  NoisePredictor predictor(int n_steps) const;

  const SceneTokens& scene() const { return scene_; }

 private:
  const ModelParams* params_;
  SceneTokens scene_;
  int instruction_id_;
  Eigen::Vector2d shift_;
  std::vector<MatrixF> keys_;    // per layer, rotated
  std::vector<MatrixF> values_;  // per layer, rotated when rotary_values
};

/// Everything random in one optimizer step, drawn up front so the loss is a pure function of it.
struct TrainingBatch {
  int width = 0;
  int height = 0;
  int draws = 1;
  std::vector<MatrixF> full_patches;    // per record
  std::vector<MatrixF> masked_patches;  // per record
  std::vector<int> instruction_ids;     // per record
  std::vector<AffordanceLatent> noisy;  // per record x draw, record-major
  std::vector<NoisePair> eps;
  std::vector<int> steps;
};

TrainingBatch sample_training_batch(std::span<const SampleRecord* const> records, const DiffusionSchedule& sched_loc,
                                    const DiffusionSchedule& sched_rot, const TrainConfig& cfg, std::mt19937_64& rng);

/// Weighted L1 noise loss averaged over the batch. When `grads` is non-null it receives one gradient per tensor.
double batch_loss(const ModelParams& params, const TrainingBatch& batch, const LossWeights& weights, int n_steps,
                  std::vector<MatrixF>* grads);

/// The same loss evaluated in double precision on an explicit tensor list (gradient checking).
double batch_loss_f64(const ModelConfig& cfg, const std::vector<MatrixD>& tensors, const TrainingBatch& batch,
                      const LossWeights& weights, int n_steps, std::vector<MatrixD>* grads);

/// Adaptive-moment optimizer with decoupled weight decay.
class Trainer {
 public:
  Trainer(ModelParams params, TrainConfig cfg, DiffusionSchedule sched_loc, DiffusionSchedule sched_rot);

  /// One update on `records`; returns the pre-update loss. Throws NonFiniteLoss on NaN/Inf.
  double step(std::span<const SampleRecord* const> records, std::mt19937_64& rng);

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  int steps_taken() const { return t_; }
  double current_lr() const;

 private:
  ModelParams params_;
  TrainConfig cfg_;
  DiffusionSchedule sched_loc_;
  DiffusionSchedule sched_rot_;
  std::vector<MatrixF> m_;
  std::vector<MatrixF> v_;
  int t_ = 0;
};

/// Epoch-wise shuffled mini-batches: every record appears once per epoch.
class BatchSampler {
 public:
  BatchSampler(size_t count, int batch_size);
  std::vector<size_t> next(std::mt19937_64& rng);

 private:
  std::vector<size_t> order_;
  size_t cursor_;
  int batch_size_;
};

/// Called after every update with the 1-based step, the learning rate used and the pre-update loss.
using StepCallback = std::function<void(int step, double lr, double loss, const ModelParams& params)>;

/// Full training run: parameters from `init_seed`, batches and noise from `cfg.seed`.
ModelParams train_model(std::span<const SampleRecord> records, const TrainConfig& cfg, uint64_t init_seed,
                        const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot,
                        const StepCallback& on_step = {});

/// Stateless form: runs a single update from fresh optimizer moments and returns (params', loss).
std::pair<ModelParams, double> train_step(const ModelParams& params, std::span<const SampleRecord* const> records,
                                          const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot,
                                          const TrainConfig& cfg, std::mt19937_64& rng);

inline constexpr uint32_t kParamFormatVersion = 1;

void save_params(const ModelParams& params, const std::filesystem::path& path);
/// With `expected`, a file whose config differs in any shape-bearing field raises ShapeMismatch.
ModelParams load_params(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace afford
