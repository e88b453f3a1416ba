#pragma once

#include "tssr/rope.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace tssr::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Reverse-mode tape over dense matrices. Rows are sequence positions,
/// columns are features. Every op records its backward closure; `backward`
/// replays them in reverse creation order. Parameter leaves remember their
/// index so gradients can be collected into an external buffer.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Col = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Var {
    int id = -1;
  };

  Tape() = default;
  // backward closures capture `this`
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value) { return push(std::move(value), false); }

  Var param(const Mat& value, int param_index) {
    Var v = push(value, true);
    nodes_[v.id].param_index = param_index;
    return v;
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  Eigen::Index rows(Var v) const { return nodes_[v.id].value.rows(); }
  Eigen::Index cols(Var v) const { return nodes_[v.id].value.cols(); }

  /// Adds `g` to the gradient of `v`; used to seed backward.
  void seed(Var v, const Mat& g) {
    if (nodes_[v.id].requires_grad) grad(v.id) += g;
  }

  void backward() {
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      auto& n = nodes_[id];
      if (n.has_grad && n.back) n.back();
    }
  }

  /// Calls fn(param_index, grad) for every parameter leaf that received a
  /// gradient. A parameter used several times appears several times.
  template <typename Fn>
  void for_each_param_grad(Fn&& fn) const {
    for (const auto& n : nodes_)
      if (n.param_index >= 0 && n.has_grad) fn(n.param_index, n.grad);
  }

  // --- ops ------------------------------------------------------------------

  Var matmul(Var a, Var b) {
    Var out = emit(value(a) * value(b), {a, b});
    record(out, [this, a, b, out] {
      const Mat& g = nodes_[out.id].grad;
      if (needs(a)) grad(a.id).noalias() += g * value(b).transpose();
      if (needs(b)) grad(b.id).noalias() += value(a).transpose() * g;
    });
    return out;
  }

  /// x * w + b, with b a 1 x out row broadcast over rows.
  Var linear(Var x, Var w, Var b) {
    Mat y = value(x) * value(w);
    y.rowwise() += value(b).row(0);
    Var out = emit(std::move(y), {x, w, b});
    record(out, [this, x, w, b, out] {
      const Mat& g = nodes_[out.id].grad;
      if (needs(x)) grad(x.id).noalias() += g * value(w).transpose();
      if (needs(w)) grad(w.id).noalias() += value(x).transpose() * g;
      if (needs(b)) grad(b.id) += g.colwise().sum();
    });
    return out;
  }

  /// x * w without bias.
  Var project(Var x, Var w) { return matmul(x, w); }

  Var add(Var a, Var b) {
    Var out = emit(value(a) + value(b), {a, b});
    record(out, [this, a, b, out] {
      const Mat& g = nodes_[out.id].grad;
      if (needs(a)) grad(a.id) += g;
      if (needs(b)) grad(b.id) += g;
    });
    return out;
  }

  /// Adds the single row of `row` to every row of `a`.
  Var add_row(Var a, Var row) {
    Mat y = value(a);
    y.rowwise() += value(row).row(0);
    Var out = emit(std::move(y), {a, row});
    record(out, [this, a, row, out] {
      const Mat& g = nodes_[out.id].grad;
      if (needs(a)) grad(a.id) += g;
      if (needs(row)) grad(row.id) += g.colwise().sum();
    });
    return out;
  }

  Var layer_norm(Var x, Var gain, Var bias, Scalar eps = Scalar(1e-5)) {
    const Mat& xv = value(x);
    const Eigen::Index d = xv.cols();
    const Col mean = xv.rowwise().mean();
    Mat xhat = xv.colwise() - mean;
    const Col inv_std = ((xhat.array().square().rowwise().sum() / Scalar(d)) + eps).rsqrt().matrix();
    xhat = xhat.array().colwise() * inv_std.array();
    Mat y = xhat.array().rowwise() * value(gain).row(0).array();
    y.rowwise() += value(bias).row(0);
    Var out = emit(std::move(y), {x, gain, bias});
    record(out, [this, x, gain, bias, out, xhat = std::move(xhat), inv_std] {
      const Mat& g = nodes_[out.id].grad;
      if (needs(gain)) grad(gain.id) += (g.array() * xhat.array()).colwise().sum().matrix();
      if (needs(bias)) grad(bias.id) += g.colwise().sum();
      if (needs(x)) {
        const Eigen::Index dd = xhat.cols();
        const Mat dxhat = g.array().rowwise() * value(gain).row(0).array();
        const Col m1 = dxhat.rowwise().sum() / Scalar(dd);
        const Col m2 = (dxhat.array() * xhat.array()).rowwise().sum().matrix() / Scalar(dd);
        Mat dx = dxhat.colwise() - m1;
        dx -= (xhat.array().colwise() * m2.array()).matrix();
        grad(x.id) += (dx.array().colwise() * inv_std.array()).matrix();
      }
    });
    return out;
  }

  /// tanh approximation of GELU.
  Var gelu(Var x) {
    const Scalar c = Scalar(0.7978845608028654);
    const Scalar k = Scalar(0.044715);
    const auto& xv = value(x).array();
    Mat th = (c * (xv + k * xv.cube())).tanh().matrix();
    Var out = emit((Scalar(0.5) * xv * (Scalar(1) + th.array())).matrix(), {x});
    record(out, [this, x, out, th = std::move(th), c, k] {
      const auto& xv2 = value(x).array();
      const auto t = th.array();
      const auto d = Scalar(0.5) * (Scalar(1) + t) +
                     Scalar(0.5) * xv2 * (Scalar(1) - t.square()) * c * (Scalar(1) + Scalar(3) * k * xv2.square());
      grad(x.id) += (nodes_[out.id].grad.array() * d).matrix();
    });
    return out;
  }

  Var silu(Var x) {
    const auto& xv = value(x).array();
    Mat sig = (Scalar(1) / (Scalar(1) + (-xv).exp())).matrix();
    Var out = emit((xv * sig.array()).matrix(), {x});
    record(out, [this, x, out, sig = std::move(sig)] {
      const auto s = sig.array();
      const auto d = s * (Scalar(1) + value(x).array() * (Scalar(1) - s));
      grad(x.id) += (nodes_[out.id].grad.array() * d).matrix();
    });
    return out;
  }

  /// Rotary embedding with precomputed per-row cos/sin tables (rows x pairs).
  Var rope(Var x, const Mat& cos_table, const Mat& sin_table, int head_dim) {
    Mat y = value(x);
    rotate_pairs(y, cos_table, sin_table, head_dim, false);
    Var out = emit(std::move(y), {x});
    record(out, [this, x, out, cos_table, sin_table, head_dim] {
      Mat g = nodes_[out.id].grad;
      rotate_pairs(g, cos_table, sin_table, head_dim, true);
      grad(x.id) += g;
    });
    return out;
  }

  /// Multi-head scaled dot-product attention without masking: every query
  /// row attends to every key row.
  Var attention(Var q, Var k, Var v, int heads) {
    const Mat& qv = value(q);
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    const Eigen::Index width = qv.cols();
    const Eigen::Index dh = width / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dh));
    std::vector<Mat> probs(static_cast<std::size_t>(heads));
    Mat o(qv.rows(), width);
    for (int h = 0; h < heads; ++h) {
      Mat& p = probs[static_cast<std::size_t>(h)];
      p.noalias() = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * scale;
      softmax_rows(p);
      o.middleCols(h * dh, dh).noalias() = p * vv.middleCols(h * dh, dh);
    }
    Var out = emit(std::move(o), {q, k, v});
    record(out, [this, q, k, v, out, heads, dh, scale, probs = std::move(probs)] {
      const Mat& g = nodes_[out.id].grad;
      const Mat& qv2 = value(q);
      const Mat& kv2 = value(k);
      const Mat& vv2 = value(v);
      for (int h = 0; h < heads; ++h) {
        const Mat& p = probs[static_cast<std::size_t>(h)];
        const auto gh = g.middleCols(h * dh, dh);
        if (needs(v)) grad(v.id).middleCols(h * dh, dh).noalias() += p.transpose() * gh;
        if (!needs(q) && !needs(k)) continue;
        Mat dp = gh * vv2.middleCols(h * dh, dh).transpose();
        const Col rowdot = (dp.array() * p.array()).rowwise().sum().matrix();
        dp = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
        if (needs(q)) grad(q.id).middleCols(h * dh, dh).noalias() += dp * kv2.middleCols(h * dh, dh);
        if (needs(k)) grad(k.id).middleCols(h * dh, dh).noalias() += dp.transpose() * qv2.middleCols(h * dh, dh);
      }
    });
    return out;
  }

  /// Rows of `table` selected by `ids`.
  Var embed(Var table, std::span<const int> ids) {
    const Mat& t = value(table);
    Mat y(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
    Var out = emit(std::move(y), {table});
    record(out, [this, table, out, ids = std::vector<int>(ids.begin(), ids.end())] {
      const Mat& g = nodes_[out.id].grad;
      Mat& gt = grad(table.id);
      for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    });
    return out;
  }

  /// Mean over consecutive groups of `factor` rows.
  Var pool(Var x, int factor) {
    const Mat& xv = value(x);
    const Eigen::Index n = xv.rows() / factor;
    Mat y = Mat::Zero(n, xv.cols());
    for (Eigen::Index r = 0; r < n; ++r)
      for (int j = 0; j < factor; ++j) y.row(r) += xv.row(r * factor + j);
    y /= Scalar(factor);
    Var out = emit(std::move(y), {x});
    record(out, [this, x, out, factor] {
      const Mat& g = nodes_[out.id].grad;
      Mat& gx = grad(x.id);
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (int j = 0; j < factor; ++j) gx.row(r * factor + j) += g.row(r) / Scalar(factor);
    });
    return out;
  }

  /// Each row repeated `factor` times.
  Var repeat(Var x, int factor) {
    const Mat& xv = value(x);
    Mat y(xv.rows() * factor, xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r)
      for (int j = 0; j < factor; ++j) y.row(r * factor + j) = xv.row(r);
    Var out = emit(std::move(y), {x});
    record(out, [this, x, out, factor] {
      const Mat& g = nodes_[out.id].grad;
      Mat& gx = grad(x.id);
      for (Eigen::Index r = 0; r < gx.rows(); ++r)
        for (int j = 0; j < factor; ++j) gx.row(r) += g.row(r * factor + j);
    });
    return out;
  }

  static void softmax_rows(Mat& p) {
    const Col mx = p.rowwise().maxCoeff();
    p = (p.colwise() - mx).array().exp().matrix();
    const Col inv = p.rowwise().sum().cwiseInverse();
    p = p.array().colwise() * inv.array();
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
    int param_index = -1;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var emit(Mat value, std::initializer_list<Var> inputs) {
    bool rg = false;
    for (Var in : inputs) rg = rg || nodes_[in.id].requires_grad;
    return push(std::move(value), rg);
  }

  template <typename Fn>
  void record(Var out, Fn&& fn) {
    if (nodes_[out.id].requires_grad) nodes_[out.id].back = std::forward<Fn>(fn);
  }

  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  Mat& grad(int id) {
    auto& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  std::vector<Node> nodes_;
};

}  // namespace tssr::ad
