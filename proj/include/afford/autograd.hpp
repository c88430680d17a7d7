#pragma once

// Minimal reverse-mode automatic differentiation over row-major dense matrices.
//
// A Tape records every operation in creation order, which is already a topological order, so
// backward() simply walks the node list in reverse. Scalars are templated: training runs in float,
// gradient checks instantiate the same graph in double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "afford/error.hpp"

namespace afford::ag {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Query row attends to key rows [begin, end) and, when extra >= 0, to key row `extra` as well.
struct KeySpan {
  int begin = 0;
  int end = 0;
  int extra = -1;

  bool operator==(const KeySpan&) const = default;
};

/// Axial 2D rotary table: each head splits into a u-half and a v-half, and each half rotates
/// `freqs.size()` coordinate pairs.
struct RotaryTable {
  std::vector<double> freqs;  // radians per pixel
  int head_dim = 0;

  static RotaryTable make(int head_dim, double min_wavelength, double max_wavelength);
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix<T> value) { return push(std::move(value), nullptr, false); }
  /// Borrowed value; the referenced matrix must outlive the tape.
  Var constant_ref(const Matrix<T>* value) { return push({}, value, false); }
  Var parameter(Matrix<T> value) { return push(std::move(value), nullptr, true); }
  Var parameter_ref(const Matrix<T>* value) { return push({}, value, true); }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.own;
  }
  /// Gradient of the last backward() root w.r.t. v; empty when v received no gradient.
  const Matrix<T>& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  size_t size() const { return nodes_.size(); }

  void backward(Var root) {
    Node& r = nodes_[root.id];
    if (value(root).size() != 1) fail(ErrorCode::kInvalidArgument, "backward root must be a scalar");
    r.grad = Matrix<T>::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() > 0) n.backward();
    }
  }

  // ---- ops -------------------------------------------------------------------------------------

  Var matmul(Var a, Var b) {
    Var out = emit(value(a) * value(b), {a, b});
    on_backward(out, [this, a, b, out] {
      const Matrix<T>& g = grad(out);
      if (requires_grad(a)) accum(a, g * value(b).transpose());
      if (requires_grad(b)) accum(b, value(a).transpose() * g);
    });
    return out;
  }

  /// x W + b with b a 1 x m row broadcast over rows.
  Var linear(Var x, Var w, Var b) {
    Matrix<T> y = value(x) * value(w);
    y.rowwise() += value(b).row(0);
    Var out = emit(std::move(y), {x, w, b});
    on_backward(out, [this, x, w, b, out] {
      const Matrix<T>& g = grad(out);
      if (requires_grad(x)) accum(x, g * value(w).transpose());
      if (requires_grad(w)) accum(w, value(x).transpose() * g);
      if (requires_grad(b)) accum(b, g.colwise().sum());
    });
    return out;
  }

  Var add(Var a, Var b) {
    Var out = emit(value(a) + value(b), {a, b});
    on_backward(out, [this, a, b, out] {
      if (requires_grad(a)) accum(a, grad(out));
      if (requires_grad(b)) accum(b, grad(out));
    });
    return out;
  }

  Var scale(Var a, T s) {
    Var out = emit(value(a) * s, {a});
    on_backward(out, [this, a, out, s] { accum(a, grad(out) * s); });
    return out;
  }

  /// Tanh approximation of GELU.
  Var gelu(Var a) {
    const Matrix<T>& x = value(a);
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T k = static_cast<T>(0.044715);
    Matrix<T> t = (c * (x.array() + k * x.array().cube())).tanh().matrix();
    Matrix<T> y = (T(0.5) * x.array() * (T(1) + t.array())).matrix();
    Var out = emit(std::move(y), {a});
    on_backward(out, [this, a, out, t = std::move(t), c, k] {
      const auto x = value(a).array();
      const auto dt = (T(1) - t.array().square()) * c * (T(1) + T(3) * k * x.square());
      const auto dydx = T(0.5) * (T(1) + t.array()) + T(0.5) * x * dt;
      accum(a, (grad(out).array() * dydx).matrix());
    });
    return out;
  }

  /// Row-wise layer normalization with learned gain and bias (both 1 x d).
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const Matrix<T>& xv = value(x);
    const Eigen::Index rows = xv.rows();
    const Eigen::Index d = xv.cols();
    Matrix<T> xhat(rows, d);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const T mean = xv.row(r).mean();
      const T var = (xv.row(r).array() - mean).square().mean();
      inv_std(r) = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Matrix<T> y = xhat.array().rowwise() * value(gain).row(0).array();
    y.rowwise() += value(bias).row(0);
    Var out = emit(std::move(y), {x, gain, bias});
    on_backward(out, [this, x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const Matrix<T>& g = grad(out);
      if (requires_grad(gain)) accum(gain, (g.array() * xhat.array()).colwise().sum().matrix());
      if (requires_grad(bias)) accum(bias, g.colwise().sum());
      if (requires_grad(x)) {
        Matrix<T> dxhat = g.array().rowwise() * value(gain).row(0).array();
        Matrix<T> dx(dxhat.rows(), dxhat.cols());
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const T m1 = dxhat.row(r).mean();
          const T m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        accum(x, dx);
      }
    });
    return out;
  }

  Var concat_cols(Var a, Var b) {
    const Matrix<T>& av = value(a);
    const Matrix<T>& bv = value(b);
    if (av.rows() != bv.rows()) fail(ErrorCode::kDimensionMismatch, "concat_cols row mismatch");
    Matrix<T> y(av.rows(), av.cols() + bv.cols());
    y << av, bv;
    const Eigen::Index ca = av.cols();
    const Eigen::Index cb = bv.cols();
    Var out = emit(std::move(y), {a, b});
    on_backward(out, [this, a, b, out, ca, cb] {
      if (requires_grad(a)) accum(a, grad(out).leftCols(ca));
      if (requires_grad(b)) accum(b, grad(out).rightCols(cb));
    });
    return out;
  }

  Var concat_rows(Var a, Var b) {
    const Matrix<T>& av = value(a);
    const Matrix<T>& bv = value(b);
    if (av.cols() != bv.cols()) fail(ErrorCode::kDimensionMismatch, "concat_rows column mismatch");
    Matrix<T> y(av.rows() + bv.rows(), av.cols());
    y << av, bv;
    const Eigen::Index ra = av.rows();
    const Eigen::Index rb = bv.rows();
    Var out = emit(std::move(y), {a, b});
    on_backward(out, [this, a, b, out, ra, rb] {
      if (requires_grad(a)) accum(a, grad(out).topRows(ra));
      if (requires_grad(b)) accum(b, grad(out).bottomRows(rb));
    });
    return out;
  }

  /// out.row(i) = a.row(index[i]).
  Var gather_rows(Var a, std::vector<int> index) {
    const Matrix<T>& av = value(a);
    Matrix<T> y(static_cast<Eigen::Index>(index.size()), av.cols());
    for (size_t i = 0; i < index.size(); ++i) y.row(i) = av.row(index[i]);
    Var out = emit(std::move(y), {a});
    on_backward(out, [this, a, out, index = std::move(index)] {
      Matrix<T> g = Matrix<T>::Zero(value(a).rows(), value(a).cols());
      const Matrix<T>& go = grad(out);
      for (size_t i = 0; i < index.size(); ++i) g.row(index[i]) += go.row(i);
      accum(a, g);
    });
    return out;
  }

  /// Rotates every head of every row by its 2D pixel position (rows x 2). `inverse` rotates by the
  /// negated angles. The op is linear, so its backward is the opposite rotation.
  Var rotary(Var a, const Eigen::MatrixX2d& positions, const RotaryTable& table, bool inverse = false) {
    const Matrix<T>& av = value(a);
    if (positions.rows() != av.rows()) fail(ErrorCode::kDimensionMismatch, "rotary position count mismatch");
    if (table.head_dim <= 0 || av.cols() % table.head_dim != 0 || table.head_dim % 4 != 0 ||
        static_cast<int>(table.freqs.size()) * 4 != table.head_dim) {
      fail(ErrorCode::kDimensionMismatch, "rotary table does not fit the head layout");
    }
    const int m = static_cast<int>(table.freqs.size());
    Matrix<T> cosines(av.rows(), 2 * m);
    Matrix<T> sines(av.rows(), 2 * m);
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
      for (int axis = 0; axis < 2; ++axis) {
        for (int j = 0; j < m; ++j) {
          const double angle = (inverse ? -1.0 : 1.0) * positions(r, axis) * table.freqs[j];
          cosines(r, axis * m + j) = static_cast<T>(std::cos(angle));
          sines(r, axis * m + j) = static_cast<T>(std::sin(angle));
        }
      }
    }
    const int head_dim = table.head_dim;
    Matrix<T> y = apply_rotation(av, cosines, sines, head_dim, false);
    Var out = emit(std::move(y), {a});
    on_backward(out, [this, a, out, cosines = std::move(cosines), sines = std::move(sines), head_dim] {
      accum(a, apply_rotation(grad(out), cosines, sines, head_dim, true));
    });
    return out;
  }

  /// Multi-head scaled dot-product attention. Row r of q attends to the key rows named by spans[r].
  /// Consecutive queries that share [begin, end) are processed as one block.
  Var attention(Var q, Var k, Var v, int heads, std::vector<KeySpan> spans) {
    const Matrix<T>& qv = value(q);
    const Matrix<T>& kv = value(k);
    const Matrix<T>& vv = value(v);
    if (static_cast<Eigen::Index>(spans.size()) != qv.rows()) fail(ErrorCode::kDimensionMismatch, "one span per query");
    if (qv.cols() != kv.cols() || kv.cols() != vv.cols() || kv.rows() != vv.rows() || qv.cols() % heads != 0) {
      fail(ErrorCode::kDimensionMismatch, "attention shape mismatch");
    }
    const int dh = static_cast<int>(qv.cols() / heads);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    auto runs = std::make_shared<std::vector<Run>>(split_runs(spans));
    Matrix<T> y = Matrix<T>::Zero(qv.rows(), qv.cols());
    for (Run& run : *runs) {
      const Eigen::Index nq = run.count;
      const Eigen::Index nk = run.span.end - run.span.begin;
      const bool has_extra = run.has_extra;
      run.probs.resize(heads);
      run.extra_probs.resize(heads);
      for (int h = 0; h < heads; ++h) {
        const auto qb = qv.block(run.first, h * dh, nq, dh);
        const auto kb = kv.block(run.span.begin, h * dh, nk, dh);
        Matrix<T> logits = (qb * kb.transpose()) * scale;
        Eigen::Matrix<T, Eigen::Dynamic, 1> extra;
        if (has_extra) {
          extra.resize(nq);
          for (Eigen::Index i = 0; i < nq; ++i) {
            extra(i) = qb.row(i).dot(kv.row(spans[run.first + i].extra).segment(h * dh, dh)) * scale;
          }
        }
        for (Eigen::Index i = 0; i < nq; ++i) {
          T mx = nk > 0 ? logits.row(i).maxCoeff() : -std::numeric_limits<T>::infinity();
          if (has_extra) mx = std::max(mx, extra(i));
          logits.row(i) = (logits.row(i).array() - mx).exp();
          T denom = logits.row(i).sum();
          if (has_extra) {
            extra(i) = std::exp(extra(i) - mx);
            denom += extra(i);
          }
          logits.row(i) /= denom;
          if (has_extra) extra(i) /= denom;
        }
        auto yb = y.block(run.first, h * dh, nq, dh);
        yb.noalias() += logits * vv.block(run.span.begin, h * dh, nk, dh);
        if (has_extra) {
          for (Eigen::Index i = 0; i < nq; ++i) {
            yb.row(i) += extra(i) * vv.row(spans[run.first + i].extra).segment(h * dh, dh);
          }
        }
        run.probs[h] = std::move(logits);
        run.extra_probs[h] = std::move(extra);
      }
    }
    Var out = emit(std::move(y), {q, k, v});
    on_backward(out, [this, q, k, v, out, heads, dh, scale, runs, spans = std::move(spans)] {
      const Matrix<T>& go = grad(out);
      const Matrix<T>& qv2 = value(q);
      const Matrix<T>& kv2 = value(k);
      const Matrix<T>& vv2 = value(v);
      Matrix<T> dq = Matrix<T>::Zero(qv2.rows(), qv2.cols());
      Matrix<T> dk = Matrix<T>::Zero(kv2.rows(), kv2.cols());
      Matrix<T> dv = Matrix<T>::Zero(vv2.rows(), vv2.cols());
      for (const Run& run : *runs) {
        const Eigen::Index nq = run.count;
        const Eigen::Index nk = run.span.end - run.span.begin;
        for (int h = 0; h < heads; ++h) {
          const Matrix<T>& p = run.probs[h];
          const auto gob = go.block(run.first, h * dh, nq, dh);
          const auto qb = qv2.block(run.first, h * dh, nq, dh);
          const auto kb = kv2.block(run.span.begin, h * dh, nk, dh);
          const auto vb = vv2.block(run.span.begin, h * dh, nk, dh);
          Matrix<T> dp = gob * vb.transpose();
          dv.block(run.span.begin, h * dh, nk, dh).noalias() += p.transpose() * gob;
          Eigen::Matrix<T, Eigen::Dynamic, 1> dextra;
          if (run.has_extra) {
            dextra.resize(nq);
            for (Eigen::Index i = 0; i < nq; ++i) {
              const int e = spans[run.first + i].extra;
              dextra(i) = gob.row(i).dot(vv2.row(e).segment(h * dh, dh));
              dv.row(e).segment(h * dh, dh) += run.extra_probs[h](i) * gob.row(i);
            }
          }
          // softmax backward: ds = p * (dp - sum(p * dp))
          Matrix<T> ds(nq, nk);
          for (Eigen::Index i = 0; i < nq; ++i) {
            T inner = (p.row(i).array() * dp.row(i).array()).sum();
            if (run.has_extra) inner += run.extra_probs[h](i) * dextra(i);
            ds.row(i) = p.row(i).array() * (dp.row(i).array() - inner);
            if (run.has_extra) dextra(i) = run.extra_probs[h](i) * (dextra(i) - inner);
          }
          ds *= scale;
          dq.block(run.first, h * dh, nq, dh).noalias() += ds * kb;
          dk.block(run.span.begin, h * dh, nk, dh).noalias() += ds.transpose() * qb;
          if (run.has_extra) {
            for (Eigen::Index i = 0; i < nq; ++i) {
              const int e = spans[run.first + i].extra;
              const T s = dextra(i) * scale;
              dq.row(run.first + i).segment(h * dh, dh) += s * kv2.row(e).segment(h * dh, dh);
              dk.row(e).segment(h * dh, dh) += s * qb.row(i);
            }
          }
        }
      }
      if (requires_grad(q)) accum(q, dq);
      if (requires_grad(k)) accum(k, dk);
      if (requires_grad(v)) accum(v, dv);
    });
    return out;
  }

  /// weight * mean(|pred - target|) as a 1 x 1 node.
  Var l1_loss(Var pred, const Matrix<T>& target, T weight) {
    const Matrix<T>& pv = value(pred);
    if (pv.rows() != target.rows() || pv.cols() != target.cols()) fail(ErrorCode::kDimensionMismatch, "l1 shape");
    Matrix<T> resid = pv - target;
    const T n = static_cast<T>(resid.size());
    Matrix<T> y(1, 1);
    y(0, 0) = weight * resid.cwiseAbs().sum() / n;
    Var out = emit(std::move(y), {pred});
    on_backward(out, [this, pred, out, resid = std::move(resid), weight, n] {
      const T g = grad(out)(0, 0) * weight / n;
      accum(pred, (resid.array().sign() * g).matrix());
    });
    return out;
  }

 private:
  struct Node {
    Matrix<T> own;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  struct Run {
    Eigen::Index first = 0;
    Eigen::Index count = 0;
    KeySpan span;
    bool has_extra = false;
    std::vector<Matrix<T>> probs;
    std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> extra_probs;
  };

  static std::vector<Run> split_runs(const std::vector<KeySpan>& spans) {
    std::vector<Run> runs;
    for (size_t i = 0; i < spans.size(); ++i) {
      const KeySpan& s = spans[i];
      const bool extra = s.extra >= 0;
      if (!runs.empty()) {
        Run& last = runs.back();
        if (last.span.begin == s.begin && last.span.end == s.end && last.has_extra == extra) {
          ++last.count;
          continue;
        }
      }
      Run run;
      run.first = static_cast<Eigen::Index>(i);
      run.count = 1;
      run.span = s;
      run.has_extra = extra;
      runs.push_back(std::move(run));
    }
    return runs;
  }

  static Matrix<T> apply_rotation(const Matrix<T>& x, const Matrix<T>& cosines, const Matrix<T>& sines, int head_dim,
                                  bool transpose) {
    Matrix<T> y = x;
    const int m = static_cast<int>(cosines.cols() / 2);
    const int heads = static_cast<int>(x.cols() / head_dim);
    const T sign = transpose ? T(-1) : T(1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (int h = 0; h < heads; ++h) {
        for (int axis = 0; axis < 2; ++axis) {
          const int base = h * head_dim + axis * (head_dim / 2);
          for (int j = 0; j < m; ++j) {
            const T c = cosines(r, axis * m + j);
            const T s = sign * sines(r, axis * m + j);
            const T x0 = x(r, base + 2 * j);
            const T x1 = x(r, base + 2 * j + 1);
            y(r, base + 2 * j) = c * x0 - s * x1;
            y(r, base + 2 * j + 1) = s * x0 + c * x1;
          }
        }
      }
    }
    return y;
  }

  Var push(Matrix<T> value, const Matrix<T>* ref, bool requires_grad) {
    Node n;
    n.own = std::move(value);
    n.ref = ref;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var emit(Matrix<T> value, std::initializer_list<Var> inputs) {
    bool rg = false;
    for (Var in : inputs) rg = rg || nodes_[in.id].requires_grad;
    return push(std::move(value), nullptr, rg);
  }

  template <typename F>
  void on_backward(Var out, F&& fn) {
    if (nodes_[out.id].requires_grad) nodes_[out.id].backward = std::forward<F>(fn);
  }

  template <typename Expr>
  void accum(Var v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::vector<Node> nodes_;
};

inline RotaryTable RotaryTable::make(int head_dim, double min_wavelength, double max_wavelength) {
  if (head_dim % 4 != 0) fail(ErrorCode::kBadParams, "rotary head dimension must be a multiple of 4");
  RotaryTable t;
  t.head_dim = head_dim;
  const int m = head_dim / 4;
  for (int j = 0; j < m; ++j) {
    const double frac = m > 1 ? static_cast<double>(j) / (m - 1) : 0.0;
    const double wavelength = min_wavelength * std::pow(max_wavelength / min_wavelength, frac);
    t.freqs.push_back(2.0 * 3.14159265358979323846 / wavelength);
  }
  return t;
}

}  // namespace afford::ag
