#include "afford/denoiser.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "afford/error.hpp"
#include "json_io.hpp"

namespace afford {

using ag::KeySpan;
using ag::Tape;
using ag::Var;

// ---- configuration -------------------------------------------------------------------------------

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kBadParams, what);
  };
  need(d_model > 0 && n_layers > 0 && n_heads > 0 && patch_size > 0 && ff_mult > 0, "model sizes must be positive");
  need(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  need(head_dim() % 4 == 0, "head dimension must be a multiple of 4 for axial rotary encoding");
  need(n_instructions > 0, "instruction table must be non-empty");
  need(step_embed_dim > 0 && step_embed_dim % 2 == 0, "step embedding dimension must be positive and even");
  need(max_depth > 0.0, "max_depth must be positive");
  need(rope_min_wavelength > 0.0 && rope_max_wavelength >= rope_min_wavelength, "invalid rotary wavelengths");
}

void TrainConfig::validate() const {
  model.validate();
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kBadParams, what);
  };
  need(lr > 0.0, "lr must be positive");
  need(weight_decay >= 0.0, "weight_decay must be non-negative");
  need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "moment coefficients must lie in [0, 1)");
  need(adam_eps > 0.0, "adam_eps must be positive");
  need(batch_size > 0 && steps >= 0 && warmup_steps >= 0, "batch_size/steps must be positive");
  need(min_lr_ratio > 0.0 && min_lr_ratio <= 1.0, "min_lr_ratio must lie in (0, 1]");
  need(noise_draws > 0, "noise_draws must be positive");
  need(weights.w_loc >= 0.0 && weights.w_rot >= 0.0, "loss weights must be non-negative");
}

// ---- parameters ----------------------------------------------------------------------------------

std::vector<TensorSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  const int d = c.d_model;
  const int ff = c.ff_mult * d;
  std::vector<TensorSpec> out;
  auto w = [&](std::string name, int r, int k) { out.push_back({std::move(name), r, k, true}); };
  auto b = [&](std::string name, int k) { out.push_back({std::move(name), 1, k, false}); };
  auto ln = [&](const std::string& name) {
    b(name + ".g", d);
    b(name + ".b", d);
  };
  w("enc.w1", c.patch_dim(), d);
  b("enc.b1", d);
  w("enc.w2", d, d);
  b("enc.b2", d);
  w("fuse.w", 2 * d, d);
  b("fuse.b", d);
  w("aff.w1", 8 + c.step_embed_dim, d);
  b("aff.b1", d);
  w("aff.w2", d, d);
  b("aff.b2", d);
  w("instr.table", c.n_instructions, d);
  w("instr.null", 1, d);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    ln(p + "ln1");
    for (const char* m : {"wq", "wk", "wv", "wo"}) w(p + "attn." + m, d, d);
    b(p + "attn.bo", d);
    ln(p + "ln2");
    for (const char* m : {"wq", "wk", "wv", "wo"}) w(p + "cross." + m, d, d);
    b(p + "cross.bo", d);
    ln(p + "ln3");
    w(p + "ff.w1", d, ff);
    b(p + "ff.b1", ff);
    w(p + "ff.w2", ff, d);
    b(p + "ff.b2", d);
  }
  ln("final.ln");
  for (const char* head : {"loc", "rot"}) {
    const std::string p = std::string("head.") + head + ".";
    w(p + "w1", d, d);
    b(p + "b1", d);
    w(p + "w2", d, head[0] == 'l' ? 2 : 6);
    b(p + "b2", head[0] == 'l' ? 2 : 6);
  }
  return out;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  ModelParams p;
  p.config = cfg;
  p.specs = parameter_layout(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  const float residual_scale = 1.0f / std::sqrt(2.0f * static_cast<float>(cfg.n_layers));
  for (const TensorSpec& s : p.specs) {
    MatrixF m(s.rows, s.cols);
    if (ends_with(s.name, ".g")) {
      m.setOnes();
    } else if (!s.decay) {
      m.setZero();
    } else {
      float stdev = 1.0f / std::sqrt(static_cast<float>(s.rows));
      if (s.name.starts_with("instr.")) stdev = 1.0f;
      if (ends_with(s.name, "attn.wo") || ends_with(s.name, "cross.wo") || ends_with(s.name, "ff.w2")) {
        stdev *= residual_scale;
      }
      if (s.name.starts_with("head.") && ends_with(s.name, ".w2")) stdev *= 0.1f;
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stdev * gauss(rng);
    }
    p.tensors.push_back(std::move(m));
  }
  return p;
}

int ModelParams::index_of(const std::string& name) const {
  for (size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return static_cast<int>(i);
  }
  fail(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

size_t ModelParams::scalar_count() const {
  size_t n = 0;
  for (const auto& t : tensors) n += static_cast<size_t>(t.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

bool ModelParams::operator==(const ModelParams& o) const {
  if (!(config == o.config) || tensors.size() != o.tensors.size()) return false;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = o.tensors[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) != 0) return false;
  }
  return true;
}

void zero_output_heads(ModelParams& p) {
  for (const char* n : {"head.loc.w2", "head.loc.b2", "head.rot.w2", "head.rot.b2"}) p.get(n).setZero();
}

// ---- inputs --------------------------------------------------------------------------------------

MatrixF patchify(const RgbdFrame& frame, const Mask* mask, const ModelConfig& cfg) {
  const int p = cfg.patch_size;
  if (frame.width % p != 0 || frame.height % p != 0) {
    fail(ErrorCode::kDimensionMismatch, "frame size is not divisible by the patch size");
  }
  if (mask && (mask->width != frame.width || mask->height != frame.height)) {
    fail(ErrorCode::kDimensionMismatch, "mask and frame sizes differ");
  }
  if (frame.depth.width != frame.width || frame.depth.height != frame.height ||
      frame.rgb.size() != static_cast<size_t>(frame.width) * frame.height * 3) {
    fail(ErrorCode::kDimensionMismatch, "frame channels have inconsistent sizes");
  }
  const int gx = frame.width / p;
  const int gy = frame.height / p;
  const float inv_depth = static_cast<float>(1.0 / cfg.max_depth);
  MatrixF out(gx * gy, cfg.patch_dim());
  for (int j = 0; j < gy; ++j) {
    for (int i = 0; i < gx; ++i) {
      const int token = j * gx + i;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          const int col = i * p + x;
          const int row = j * p + y;
          const float m = mask ? (mask->at(col, row) ? 1.0f : 0.0f) : 1.0f;
          const int offset = y * p + x;
          for (int ch = 0; ch < 3; ++ch) out(token, ch * p * p + offset) = m * frame.rgb_unit(col, row, ch);
          const float dep = std::clamp(frame.depth.at(col, row) * inv_depth, 0.0f, 1.0f);
          out(token, 3 * p * p + offset) = m * dep;
        }
      }
    }
  }
  return out;
}

namespace {

MatrixF masked_input(const RgbdFrame& frame, const Mask& mask, const ModelConfig& cfg) {
  if (!cfg.use_masked_branch) {
    if (mask.width != frame.width || mask.height != frame.height) {
      fail(ErrorCode::kDimensionMismatch, "mask and frame sizes differ");
    }
    const int n = (frame.width / cfg.patch_size) * (frame.height / cfg.patch_size);
    return MatrixF::Zero(n, cfg.patch_dim());
  }
  return patchify(frame, &mask, cfg);
}

std::vector<PixelPoint> patch_centers(int width, int height, int patch) {
  std::vector<PixelPoint> out;
  for (int j = 0; j < height / patch; ++j) {
    for (int i = 0; i < width / patch; ++i) {
      out.push_back({patch * i + patch / 2.0, patch * j + patch / 2.0});
    }
  }
  return out;
}

template <typename T>
ag::Matrix<T> affordance_features(std::span<const AffordanceLatent> latents, std::span<const int> steps, int embed_dim) {
  ag::Matrix<T> f(static_cast<Eigen::Index>(latents.size()), 8 + embed_dim);
  for (size_t r = 0; r < latents.size(); ++r) {
    for (int k = 0; k < 2; ++k) f(r, k) = static_cast<T>(latents[r].loc(k));
    for (int k = 0; k < 6; ++k) f(r, 2 + k) = static_cast<T>(latents[r].rot(k));
    const Eigen::VectorXd e = step_embedding(steps[r], embed_dim);
    for (int k = 0; k < embed_dim; ++k) f(r, 8 + k) = static_cast<T>(e(k));
  }
  return f;
}

// ---- network -------------------------------------------------------------------------------------

/// Binds one tensor list into a tape and builds the forward graph.
template <typename T>
class Net {
 public:
  Net(Tape<T>& tape, const ModelConfig& cfg, const std::vector<TensorSpec>& specs,
      const std::vector<ag::Matrix<T>>& tensors, bool with_grads)
      : tape_(tape), cfg_(cfg), rope_(ag::RotaryTable::make(cfg.head_dim(), cfg.rope_min_wavelength,
                                                            cfg.rope_max_wavelength)) {
    if (tensors.size() != specs.size()) fail(ErrorCode::kShapeMismatch, "tensor count does not match the layout");
    for (size_t i = 0; i < specs.size(); ++i) {
      if (tensors[i].rows() != specs[i].rows || tensors[i].cols() != specs[i].cols) {
        fail(ErrorCode::kShapeMismatch, "tensor " + specs[i].name + " has the wrong shape");
      }
      vars_.push_back(with_grads ? tape.parameter_ref(&tensors[i]) : tape.constant_ref(&tensors[i]));
      index_[specs[i].name] = vars_.back();
    }
  }

  const std::vector<Var>& vars() const { return vars_; }
  Var p(const std::string& name) const { return index_.at(name); }

  Var encode(Var patches) {
    Var h = tape_.gelu(tape_.linear(patches, p("enc.w1"), p("enc.b1")));
    return tape_.linear(h, p("enc.w2"), p("enc.b2"));
  }

  Var fuse(Var full_features, Var masked_features) {
    return tape_.linear(tape_.concat_cols(full_features, masked_features), p("fuse.w"), p("fuse.b"));
  }

  Var embed_affordance(const ag::Matrix<T>& features) {
    Var x = tape_.constant(features);
    Var h = tape_.gelu(tape_.linear(x, p("aff.w1"), p("aff.b1")));
    return tape_.linear(h, p("aff.w2"), p("aff.b2"));
  }

  /// Instruction rows for each record followed by the shared null token.
  Var language(const std::vector<int>& instruction_ids) {
    for (int id : instruction_ids) {
      if (id < 0 || id >= cfg_.n_instructions) {
        fail(ErrorCode::kUnknownInstruction, "instruction id " + std::to_string(id) + " outside the table");
      }
    }
    return tape_.concat_rows(tape_.gather_rows(p("instr.table"), instruction_ids), p("instr.null"));
  }

  struct SelfOut {
    Var x;
    Var k;
    Var v;
  };

  /// Pre-norm rotary self-attention. With `ext_k`, keys/values are [ext; own] and spans index that stack.
  SelfOut self_attention(int l, Var x, const Eigen::MatrixX2d& pos, std::vector<KeySpan> spans, Var ext_k = {},
                         Var ext_v = {}) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    Var h = tape_.layer_norm(x, p(pre + "ln1.g"), p(pre + "ln1.b"));
    Var q = tape_.rotary(tape_.matmul(h, p(pre + "attn.wq")), pos, rope_);
    Var k = tape_.rotary(tape_.matmul(h, p(pre + "attn.wk")), pos, rope_);
    Var v = tape_.matmul(h, p(pre + "attn.wv"));
    if (cfg_.rotary_values) v = tape_.rotary(v, pos, rope_);
    Var keys = ext_k.valid() ? tape_.concat_rows(ext_k, k) : k;
    Var values = ext_v.valid() ? tape_.concat_rows(ext_v, v) : v;
    Var o = tape_.attention(q, keys, values, cfg_.n_heads, std::move(spans));
    if (cfg_.rotary_values) o = tape_.rotary(o, pos, rope_, /*inverse=*/true);
    Var y = tape_.linear(o, p(pre + "attn.wo"), p(pre + "attn.bo"));
    return {tape_.add(x, y), k, v};
  }

  Var cross_attention(int l, Var x, Var lang, std::vector<KeySpan> spans) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    Var h = tape_.layer_norm(x, p(pre + "ln2.g"), p(pre + "ln2.b"));
    Var q = tape_.matmul(h, p(pre + "cross.wq"));
    Var k = tape_.matmul(lang, p(pre + "cross.wk"));
    Var v = tape_.matmul(lang, p(pre + "cross.wv"));
    Var o = tape_.attention(q, k, v, cfg_.n_heads, std::move(spans));
    return tape_.add(x, tape_.linear(o, p(pre + "cross.wo"), p(pre + "cross.bo")));
  }

  Var feed_forward(int l, Var x) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    Var h = tape_.layer_norm(x, p(pre + "ln3.g"), p(pre + "ln3.b"));
    h = tape_.gelu(tape_.linear(h, p(pre + "ff.w1"), p(pre + "ff.b1")));
    return tape_.add(x, tape_.linear(h, p(pre + "ff.w2"), p(pre + "ff.b2")));
  }

  std::pair<Var, Var> heads(Var x) {
    Var z = tape_.layer_norm(x, p("final.ln.g"), p("final.ln.b"));
    Var loc = tape_.linear(tape_.gelu(tape_.linear(z, p("head.loc.w1"), p("head.loc.b1"))), p("head.loc.w2"),
                           p("head.loc.b2"));
    Var rot = tape_.linear(tape_.gelu(tape_.linear(z, p("head.rot.w1"), p("head.rot.b1"))), p("head.rot.w2"),
                           p("head.rot.b2"));
    return {loc, rot};
  }

  /// Full forward pass for `rows` affordance queries over `n_records` scenes of `n_scene` tokens each.
  /// Query r belongs to record owner[r]. Returns (loc, rot) predictions, one row per query.
  std::pair<Var, Var> forward(Var scene, int n_records, int n_scene, const Eigen::MatrixX2d& scene_pos_one,
                              const std::vector<int>& instruction_ids, const ag::Matrix<T>& aff_features,
                              const Eigen::MatrixX2d& aff_pos, const std::vector<int>& owner) {
    const int rows = static_cast<int>(owner.size());
    Var lang = language(instruction_ids);
    Var aff = embed_affordance(aff_features);
    std::vector<KeySpan> cross_aff(rows);
    for (int r = 0; r < rows; ++r) cross_aff[r] = {n_records, n_records + 1, owner[r]};

    if (cfg_.scene_attends_affordance) {
      // Joint groups: the scene tokens of the owning record followed by the query token.
      const int g = n_scene + 1;
      std::vector<int> gather;
      Eigen::MatrixX2d pos(rows * g, 2);
      std::vector<KeySpan> spans(rows * g);
      std::vector<KeySpan> cross(rows * g);
      for (int r = 0; r < rows; ++r) {
        for (int t = 0; t < g; ++t) {
          const int row = r * g + t;
          if (t < n_scene) {
            gather.push_back(owner[r] * n_scene + t);
            pos.row(row) = scene_pos_one.row(t);
          } else {
            gather.push_back(n_records * n_scene + r);
            pos.row(row) = aff_pos.row(r);
          }
          spans[row] = {r * g, (r + 1) * g, -1};
          cross[row] = {n_records, n_records + 1, owner[r]};
        }
      }
      Var x = tape_.gather_rows(tape_.concat_rows(scene, aff), std::move(gather));
      for (int l = 0; l < cfg_.n_layers; ++l) {
        x = self_attention(l, x, pos, spans).x;
        x = cross_attention(l, x, lang, cross);
        x = feed_forward(l, x);
      }
      std::vector<int> picks(rows);
      for (int r = 0; r < rows; ++r) picks[r] = r * g + n_scene;
      return heads(tape_.gather_rows(x, std::move(picks)));
    }

    Eigen::MatrixX2d scene_pos(n_records * n_scene, 2);
    std::vector<KeySpan> scene_spans(n_records * n_scene);
    std::vector<KeySpan> scene_cross(n_records * n_scene);
    for (int b = 0; b < n_records; ++b) {
      for (int t = 0; t < n_scene; ++t) {
        scene_pos.row(b * n_scene + t) = scene_pos_one.row(t);
        scene_spans[b * n_scene + t] = {b * n_scene, (b + 1) * n_scene, -1};
        scene_cross[b * n_scene + t] = {n_records, n_records + 1, b};
      }
    }
    std::vector<KeySpan> aff_spans(rows);
    for (int r = 0; r < rows; ++r) {
      aff_spans[r] = {owner[r] * n_scene, (owner[r] + 1) * n_scene, n_records * n_scene + r};
    }
    Var x = scene;
    for (int l = 0; l < cfg_.n_layers; ++l) {
      SelfOut s = self_attention(l, x, scene_pos, scene_spans);
      aff = self_attention(l, aff, aff_pos, aff_spans, s.k, s.v).x;
      x = feed_forward(l, cross_attention(l, s.x, lang, scene_cross));
      aff = feed_forward(l, cross_attention(l, aff, lang, cross_aff));
    }
    return heads(aff);
  }

  const ag::RotaryTable& rope() const { return rope_; }

 private:
  Tape<T>& tape_;
  const ModelConfig& cfg_;
  ag::RotaryTable rope_;
  std::vector<Var> vars_;
  std::unordered_map<std::string, Var> index_;
};

Eigen::MatrixX2d positions_matrix(const std::vector<PixelPoint>& pts, const Eigen::Vector2d& shift) {
  Eigen::MatrixX2d m(static_cast<Eigen::Index>(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) m.row(i) << pts[i].u + shift.x(), pts[i].v + shift.y();
  return m;
}

void check_step(int step, int n_steps) {
  if (step < 1 || step > n_steps) {
    fail(ErrorCode::kStepOutOfRange, "diffusion step " + std::to_string(step) + " outside [1, N]");
  }
}

template <typename T>
double loss_impl(const ModelConfig& cfg, const std::vector<TensorSpec>& specs, const std::vector<ag::Matrix<T>>& tensors,
                 const TrainingBatch& batch, const LossWeights& weights, int n_steps,
                 std::vector<ag::Matrix<T>>* grads) {
  const int n_records = static_cast<int>(batch.full_patches.size());
  if (n_records == 0) fail(ErrorCode::kEmptyBatch, "training batch is empty");
  const int rows = static_cast<int>(batch.noisy.size());
  if (rows != n_records * batch.draws || batch.eps.size() != batch.noisy.size() ||
      batch.steps.size() != batch.noisy.size()) {
    fail(ErrorCode::kDimensionMismatch, "training batch rows are inconsistent");
  }
  for (int s : batch.steps) check_step(s, n_steps);

  Tape<T> tape;
  Net<T> net(tape, cfg, specs, tensors, grads != nullptr);
  const int n_scene = static_cast<int>(batch.full_patches.front().rows());

  ag::Matrix<T> full(n_records * n_scene, cfg.patch_dim());
  ag::Matrix<T> masked(n_records * n_scene, cfg.patch_dim());
  for (int b = 0; b < n_records; ++b) {
    if (batch.full_patches[b].rows() != n_scene) fail(ErrorCode::kDimensionMismatch, "records differ in size");
    full.middleRows(b * n_scene, n_scene) = batch.full_patches[b].template cast<T>();
    masked.middleRows(b * n_scene, n_scene) = batch.masked_patches[b].template cast<T>();
  }
  // One encoder pass over both branches keeps the shared weights on a single graph path.
  ag::Matrix<T> stacked(2 * full.rows(), full.cols());
  stacked << full, masked;
  Var enc = net.encode(tape.constant(std::move(stacked)));
  std::vector<int> top(full.rows());
  std::vector<int> bottom(full.rows());
  std::iota(top.begin(), top.end(), 0);
  std::iota(bottom.begin(), bottom.end(), static_cast<int>(full.rows()));
  Var scene = net.fuse(tape.gather_rows(enc, top), tape.gather_rows(enc, bottom));

  const Eigen::MatrixX2d scene_pos =
      positions_matrix(patch_centers(batch.width, batch.height, cfg.patch_size), Eigen::Vector2d::Zero());
  Eigen::MatrixX2d aff_pos(rows, 2);
  std::vector<int> owner(rows);
  ag::Matrix<T> target_loc(rows, 2);
  ag::Matrix<T> target_rot(rows, 6);
  for (int r = 0; r < rows; ++r) {
    owner[r] = r / batch.draws;
    const PixelPoint c = denormalize_loc(batch.noisy[r].loc, batch.width, batch.height);
    aff_pos.row(r) << c.u, c.v;
    for (int k = 0; k < 2; ++k) target_loc(r, k) = static_cast<T>(batch.eps[r].eps_loc(k));
    for (int k = 0; k < 6; ++k) target_rot(r, k) = static_cast<T>(batch.eps[r].eps_rot(k));
  }
  const ag::Matrix<T> feats = affordance_features<T>(batch.noisy, batch.steps, cfg.step_embed_dim);
  auto [loc, rot] = net.forward(scene, n_records, n_scene, scene_pos, batch.instruction_ids, feats, aff_pos, owner);
  Var loss = tape.add(tape.l1_loss(loc, target_loc, static_cast<T>(weights.w_loc)),
                      tape.l1_loss(rot, target_rot, static_cast<T>(weights.w_rot)));
  const double value = static_cast<double>(tape.value(loss)(0, 0));
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (size_t i = 0; i < tensors.size(); ++i) {
      const auto& g = tape.grad(net.vars()[i]);
      grads->push_back(g.size() ? g : ag::Matrix<T>::Zero(tensors[i].rows(), tensors[i].cols()));
    }
  }
  return value;
}

}  // namespace

MatrixF encode_patches(const ModelParams& params, const MatrixF& patches) {
  Tape<float> tape;
  Net<float> net(tape, params.config, params.specs, params.tensors, false);
  return tape.value(net.encode(tape.constant_ref(&patches)));
}

SceneTokens tokenize_scene(const RgbdFrame& frame, const Mask& mask, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  const MatrixF full = patchify(frame, nullptr, cfg);
  const MatrixF masked = masked_input(frame, mask, cfg);
  Tape<float> tape;
  Net<float> net(tape, cfg, params.specs, params.tensors, false);
  Var tokens = net.fuse(net.encode(tape.constant_ref(&full)), net.encode(tape.constant_ref(&masked)));
  SceneTokens out;
  out.embeddings = tape.value(tokens);
  out.positions = patch_centers(frame.width, frame.height, cfg.patch_size);
  out.width = frame.width;
  out.height = frame.height;
  return out;
}

Eigen::VectorXd step_embedding(int step, int dim) {
  Eigen::VectorXd e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e(k) = std::sin(step * freq);
    e(half + k) = std::cos(step * freq);
  }
  return e;
}

SceneContext::SceneContext(const ModelParams& params, SceneTokens scene, int instruction_id,
                           const Eigen::Vector2d& position_shift)
    : params_(&params), scene_(std::move(scene)), instruction_id_(instruction_id), shift_(position_shift) {
  const ModelConfig& cfg = params.config;
  if (instruction_id < 0 || instruction_id >= cfg.n_instructions) {
    fail(ErrorCode::kUnknownInstruction, "instruction id " + std::to_string(instruction_id) + " outside the table");
  }
  if (scene_.embeddings.cols() != cfg.d_model || scene_.embeddings.rows() != static_cast<Eigen::Index>(scene_.positions.size())) {
    fail(ErrorCode::kDimensionMismatch, "scene tokens do not match the model width");
  }
  if (cfg.scene_attends_affordance) return;

  // Scene tokens never read the affordance token, so their per-layer keys and values are fixed.
  Tape<float> tape;
  Net<float> net(tape, cfg, params.specs, params.tensors, false);
  const int n = static_cast<int>(scene_.embeddings.rows());
  const Eigen::MatrixX2d pos = positions_matrix(scene_.positions, shift_);
  std::vector<KeySpan> spans(n, KeySpan{0, n, -1});
  std::vector<KeySpan> cross(n, KeySpan{1, 2, 0});
  Var lang = net.language({instruction_id});
  Var x = tape.constant_ref(&scene_.embeddings);
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto s = net.self_attention(l, x, pos, spans);
    keys_.push_back(tape.value(s.k));
    values_.push_back(tape.value(s.v));
    if (l + 1 < cfg.n_layers) x = net.feed_forward(l, net.cross_attention(l, s.x, lang, cross));
  }
}

std::vector<NoisePair> SceneContext::predict(std::span<const AffordanceLatent> latents, int step, int n_steps) const {
  check_step(step, n_steps);
  const ModelConfig& cfg = params_->config;
  const int rows = static_cast<int>(latents.size());
  if (rows == 0) return {};
  const int n = static_cast<int>(scene_.embeddings.rows());

  std::vector<int> steps(rows, step);
  const MatrixF feats = affordance_features<float>(latents, steps, cfg.step_embed_dim);
  Eigen::MatrixX2d aff_pos(rows, 2);
  for (int r = 0; r < rows; ++r) {
    const PixelPoint c = denormalize_loc(latents[r].loc, scene_.width, scene_.height);
    aff_pos.row(r) << c.u + shift_.x(), c.v + shift_.y();
  }

  Tape<float> tape;
  Net<float> net(tape, cfg, params_->specs, params_->tensors, false);
  Var loc;
  Var rot;
  if (cfg.scene_attends_affordance) {
    const Eigen::MatrixX2d pos = positions_matrix(scene_.positions, shift_);
    std::tie(loc, rot) = net.forward(tape.constant_ref(&scene_.embeddings), 1, n, pos, {instruction_id_}, feats,
                                     aff_pos, std::vector<int>(rows, 0));
  } else {
    Var lang = net.language({instruction_id_});
    Var aff = net.embed_affordance(feats);
    std::vector<KeySpan> spans(rows);
    for (int r = 0; r < rows; ++r) spans[r] = {0, n, n + r};
    std::vector<KeySpan> cross(rows, KeySpan{1, 2, 0});
    for (int l = 0; l < cfg.n_layers; ++l) {
      Var k = tape.constant_ref(&keys_[l]);
      Var v = tape.constant_ref(&values_[l]);
      aff = net.self_attention(l, aff, aff_pos, spans, k, v).x;
      aff = net.feed_forward(l, net.cross_attention(l, aff, lang, cross));
    }
    std::tie(loc, rot) = net.heads(aff);
  }
  const MatrixF& lv = tape.value(loc);
  const MatrixF& rv = tape.value(rot);
  std::vector<NoisePair> out(rows);
  for (int r = 0; r < rows; ++r) {
    out[r].eps_loc = lv.row(r).transpose().cast<double>();
    out[r].eps_rot = rv.row(r).transpose().cast<double>();
  }
  return out;
}

NoisePredictor SceneContext::predictor(int n_steps) const {
  return [this, n_steps](std::span<const AffordanceLatent> latents, int step) { return predict(latents, step, n_steps); };
}

NoisePair predict_noise(const ModelParams& params, const SceneTokens& scene, int instruction_id,
                        const AffordanceLatent& a_i, int step, int n_steps, const Eigen::Vector2d& position_shift) {
  check_step(step, n_steps);
  SceneContext ctx(params, scene, instruction_id, position_shift);
  return ctx.predict(std::span<const AffordanceLatent>(&a_i, 1), step, n_steps).front();
}

// ---- training ------------------------------------------------------------------------------------

TrainingBatch sample_training_batch(std::span<const SampleRecord* const> records, const DiffusionSchedule& sched_loc,
                                    const DiffusionSchedule& sched_rot, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (records.empty()) fail(ErrorCode::kEmptyBatch, "training batch is empty");
  TrainingBatch batch;
  batch.width = records.front()->width();
  batch.height = records.front()->height();
  batch.draws = cfg.noise_draws;
  const int n_steps = sched_loc.n_steps();
  std::uniform_int_distribution<int> pick_step(1, n_steps);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const SampleRecord* r : records) {
    if (r->width() != batch.width || r->height() != batch.height) {
      fail(ErrorCode::kDimensionMismatch, "batch mixes image sizes");
    }
    batch.full_patches.push_back(patchify(r->frame, nullptr, cfg.model));
    batch.masked_patches.push_back(masked_input(r->frame, r->mask, cfg.model));
    batch.instruction_ids.push_back(r->instruction_id);
    const AffordanceLatent a0 = encode_affordance(r->label(), batch.width, batch.height);
    for (int d = 0; d < cfg.noise_draws; ++d) {
      const int step = pick_step(rng);
      NoisePair eps;
      for (int k = 0; k < 2; ++k) eps.eps_loc(k) = gauss(rng);
      for (int k = 0; k < 6; ++k) eps.eps_rot(k) = gauss(rng);
      batch.steps.push_back(step);
      batch.eps.push_back(eps);
      batch.noisy.push_back(forward_noise(a0, step, sched_loc, sched_rot, eps));
    }
  }
  return batch;
}

double batch_loss(const ModelParams& params, const TrainingBatch& batch, const LossWeights& weights, int n_steps,
                  std::vector<MatrixF>* grads) {
  return loss_impl<float>(params.config, params.specs, params.tensors, batch, weights, n_steps, grads);
}

double batch_loss_f64(const ModelConfig& cfg, const std::vector<MatrixD>& tensors, const TrainingBatch& batch,
                      const LossWeights& weights, int n_steps, std::vector<MatrixD>* grads) {
  const std::vector<TensorSpec> specs = parameter_layout(cfg);
  return loss_impl<double>(cfg, specs, tensors, batch, weights, n_steps, grads);
}

Trainer::Trainer(ModelParams params, TrainConfig cfg, DiffusionSchedule sched_loc, DiffusionSchedule sched_rot)
    : params_(std::move(params)), cfg_(std::move(cfg)), sched_loc_(std::move(sched_loc)), sched_rot_(std::move(sched_rot)) {
  cfg_.validate();
  if (!(params_.config == cfg_.model)) fail(ErrorCode::kShapeMismatch, "parameters were built for another model config");
  if (sched_loc_.n_steps() != sched_rot_.n_steps()) fail(ErrorCode::kBadParams, "schedules must share N");
  for (const auto& t : params_.tensors) {
    m_.push_back(MatrixF::Zero(t.rows(), t.cols()));
    v_.push_back(MatrixF::Zero(t.rows(), t.cols()));
  }
}

double Trainer::current_lr() const {
  const int t = t_ + 1;
  if (cfg_.warmup_steps > 0 && t <= cfg_.warmup_steps) return cfg_.lr * t / cfg_.warmup_steps;
  if (cfg_.min_lr_ratio >= 1.0 || cfg_.steps <= cfg_.warmup_steps) return cfg_.lr;
  const double progress =
      std::clamp(static_cast<double>(t - cfg_.warmup_steps) / (cfg_.steps - cfg_.warmup_steps), 0.0, 1.0);
  const double cosine = 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
  return cfg_.lr * (cfg_.min_lr_ratio + (1.0 - cfg_.min_lr_ratio) * cosine);
}

double Trainer::step(std::span<const SampleRecord* const> records, std::mt19937_64& rng) {
  const TrainingBatch batch = sample_training_batch(records, sched_loc_, sched_rot_, cfg_, rng);
  std::vector<MatrixF> grads;
  const double loss = batch_loss(params_, batch, cfg_.weights, sched_loc_.n_steps(), &grads);
  if (!std::isfinite(loss)) {
    fail(ErrorCode::kNonFiniteLoss, "loss is " + std::to_string(loss) + " at step " + std::to_string(t_ + 1) +
                                        " (lr " + std::to_string(current_lr()) + ")");
  }

  double norm2 = 0.0;
  for (const auto& g : grads) norm2 += g.template cast<double>().squaredNorm();
  const double norm = std::sqrt(norm2);
  if (!std::isfinite(norm)) fail(ErrorCode::kNonFiniteLoss, "non-finite gradient at step " + std::to_string(t_ + 1));
  const float clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? static_cast<float>(cfg_.grad_clip / norm) : 1.0f;

  const double lr = current_lr();
  ++t_;
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float c1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, t_));
  const float c2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, t_));
  const float eps = static_cast<float>(cfg_.adam_eps);
  const float lr_f = static_cast<float>(lr);
  const float decay = static_cast<float>(lr * cfg_.weight_decay);
  for (size_t i = 0; i < grads.size(); ++i) {
    const MatrixF g = grads[i] * clip;
    m_[i] = b1 * m_[i] + (1.0f - b1) * g;
    v_[i] = b2 * v_[i] + (1.0f - b2) * g.cwiseProduct(g);
    MatrixF& p = params_.tensors[i];
    if (params_.specs[i].decay) p *= (1.0f - decay);
    p.array() -= lr_f * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
  if (!params_.all_finite()) {
    fail(ErrorCode::kNonFiniteLoss, "parameters became non-finite at step " + std::to_string(t_));
  }
  return loss;
}

std::pair<ModelParams, double> train_step(const ModelParams& params, std::span<const SampleRecord* const> records,
                                          const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot,
                                          const TrainConfig& cfg, std::mt19937_64& rng) {
  Trainer trainer(params, cfg, sched_loc, sched_rot);
  const double loss = trainer.step(records, rng);
  return {trainer.params(), loss};
}

BatchSampler::BatchSampler(size_t count, int batch_size) : order_(count), cursor_(count), batch_size_(batch_size) {
  if (count == 0) fail(ErrorCode::kEmptyBatch, "no records to sample batches from");
  if (batch_size < 1) fail(ErrorCode::kBadParams, "batch_size must be >= 1");
  for (size_t i = 0; i < count; ++i) order_[i] = i;
}

std::vector<size_t> BatchSampler::next(std::mt19937_64& rng) {
  std::vector<size_t> out;
  out.reserve(batch_size_);
  while (static_cast<int>(out.size()) < batch_size_) {
    if (cursor_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

ModelParams train_model(std::span<const SampleRecord> records, const TrainConfig& cfg, uint64_t init_seed,
                        const DiffusionSchedule& sched_loc, const DiffusionSchedule& sched_rot,
                        const StepCallback& on_step) {
  Trainer trainer(ModelParams::init(cfg.model, init_seed), cfg, sched_loc, sched_rot);
  BatchSampler sampler(records.size(), std::min<int>(cfg.batch_size, static_cast<int>(records.size())));
  std::mt19937_64 rng(cfg.seed);
  std::vector<const SampleRecord*> batch;
  for (int s = 1; s <= cfg.steps; ++s) {
    batch.clear();
    for (size_t i : sampler.next(rng)) batch.push_back(&records[i]);
    const double lr = trainer.current_lr();
    const double loss = trainer.step(batch, rng);
    if (on_step) on_step(s, lr, loss, trainer.params());
  }
  return trainer.params();
}

// ---- parameter file ------------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'F', 'P', 'M'};

template <typename U>
void put_le(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const std::string& what) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) fail(ErrorCode::kIoError, "truncated parameter file (" + what + ")");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

}  // namespace

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kParamFormatVersion;
  header["config"] = to_json(params.config);
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : params.specs) shapes.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  header["tensors"] = shapes;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_le<uint32_t>(os, kParamFormatVersion);
  put_le<uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params.tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) put_le<float>(os, t.data()[i]);
  }
  if (!os) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

ModelParams load_params(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIoError, "cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) fail(ErrorCode::kIoError, "truncated parameter file (magic)");
  if (std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::kIoError, path.string() + " is not a parameter file");
  const auto version = get_le<uint32_t>(is, "version");
  if (version != kParamFormatVersion) {
    fail(ErrorCode::kVersionMismatch, "parameter file version " + std::to_string(version) + ", expected " +
                                          std::to_string(kParamFormatVersion));
  }
  const auto len = get_le<uint64_t>(is, "header length");
  if (len > (1u << 26)) fail(ErrorCode::kIoError, "implausible header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) fail(ErrorCode::kIoError, "truncated parameter file (header)");

  ModelParams p;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    if (header.at("format_version").get<uint32_t>() != kParamFormatVersion) {
      fail(ErrorCode::kVersionMismatch, "header format version disagrees with the file tag");
    }
    from_json(header.at("config"), p.config);
    p.specs = parameter_layout(p.config);
    const auto& shapes = header.at("tensors");
    if (shapes.size() != p.specs.size()) fail(ErrorCode::kShapeMismatch, "tensor count disagrees with the config");
    for (size_t i = 0; i < shapes.size(); ++i) {
      const auto& s = shapes[i];
      if (s.at("name").get<std::string>() != p.specs[i].name || s.at("rows").get<int>() != p.specs[i].rows ||
          s.at("cols").get<int>() != p.specs[i].cols) {
        fail(ErrorCode::kShapeMismatch, "tensor " + p.specs[i].name + " disagrees with the config");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad parameter header: ") + e.what());
  }
  if (expected && !(p.config == *expected)) {
    fail(ErrorCode::kShapeMismatch, "parameter file was written for d_model=" + std::to_string(p.config.d_model) +
                                        ", expected d_model=" + std::to_string(expected->d_model));
  }
  for (const auto& s : p.specs) {
    MatrixF m(s.rows, s.cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<float>(is, s.name);
    p.tensors.push_back(std::move(m));
  }
  if (is.peek() != std::char_traits<char>::eof()) fail(ErrorCode::kIoError, "trailing bytes after parameter data");
  return p;
}

}  // namespace afford
