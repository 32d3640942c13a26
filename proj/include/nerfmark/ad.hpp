// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace nerfmark::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using SpMat = Eigen::SparseMatrix<S>;

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order; backward() walks them in reverse. Ops whose inputs carry no
// gradient produce constant nodes with no closure, so the same model code
// doubles as a plain inference path when parameters enter as constants.
//
// Instantiated with S = float for training and S = double for the
// finite-difference checks in the test suite.
template <typename S>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  struct ConvDims {
    int height = 0, width = 0;       // input spatial size
    int ksize = 3, stride = 1, pad = 1;
    bool reflect_pad = false;  // mirror borders instead of zero fill
    int out_height() const { return (height + 2 * pad - ksize) / stride + 1; }
    int out_width() const { return (width + 2 * pad - ksize) / stride + 1; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int size() const { return static_cast<int>(nodes_.size()); }

  void clear() { nodes_.clear(); }

  Var constant(Mat<S> v) { return push(std::move(v), false); }

  // Gradient-tracked input (parameters and anything an FD check probes).
  Var leaf(Mat<S> v) { return push(std::move(v), true); }

  const Mat<S>& val(Var v) const { return node(v).value; }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Valid after backward(); zero matrix if the node never received flow.
  const Mat<S>& grad(Var v) const {
    auto& n = node(v);
    if (!n.has_grad) {
      zero_ = Mat<S>::Zero(n.value.rows(), n.value.cols());
      return zero_;
    }
    return n.grad;
  }

  // ---- elementwise / structural ---------------------------------------

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Mat<S> v = val(a) + val(b);
    return unary_or_binary(std::move(v), a, b, [this](int, Var a2, Var b2, const Mat<S>& g) {
      acc(a2, g);
      acc(b2, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Mat<S> v = val(a) - val(b);
    return unary_or_binary(std::move(v), a, b, [this](int, Var a2, Var b2, const Mat<S>& g) {
      acc(a2, g);
      acc_neg(b2, g);
    });
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Mat<S> v = val(a).cwiseProduct(val(b));
    return unary_or_binary(std::move(v), a, b, [this](int, Var a2, Var b2, const Mat<S>& g) {
      acc(a2, g.cwiseProduct(val(b2)));
      acc(b2, g.cwiseProduct(val(a2)));
    });
  }

  Var scale(Var a, S k) {
    Mat<S> v = val(a) * k;
    return unary(std::move(v), a, [this, k](int, Var a2, const Mat<S>& g) { acc(a2, g * k); });
  }

  Var add_scalar(Var a, S k) {
    Mat<S> v = val(a).array() + k;
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) { acc(a2, g); });
  }

  Var neg(Var a) { return scale(a, S(-1)); }

  Var matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul: inner dims differ");
    Mat<S> v = val(a) * val(b);
    return unary_or_binary(std::move(v), a, b, [this](int, Var a2, Var b2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2).noalias() += g * val(b2).transpose();
      if (needs(b2)) grad_ref(b2).noalias() += val(a2).transpose() * g;
    });
  }

  // a: N x F, row: 1 x F broadcast over rows.
  Var add_row_broadcast(Var a, Var row) {
    if (val(row).rows() != 1 || val(row).cols() != val(a).cols())
      throw std::invalid_argument("add_row_broadcast: bad bias shape");
    Mat<S> v = val(a);
    v.rowwise() += val(row).row(0);
    return unary_or_binary(std::move(v), a, row, [this](int, Var a2, Var r2, const Mat<S>& g) {
      acc(a2, g);
      if (needs(r2)) grad_ref(r2).noalias() += g.colwise().sum();
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    return concat(parts, /*along_cols=*/true);
  }

  Var concat_rows(const std::vector<Var>& parts) {
    return concat(parts, /*along_cols=*/false);
  }

  Var block(Var a, int r0, int c0, int rows, int cols) {
    Mat<S> v = val(a).block(r0, c0, rows, cols);
    return unary(std::move(v), a, [this, r0, c0, rows, cols](int, Var a2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2).block(r0, c0, rows, cols) += g;
    });
  }

  // 1 x F row replicated to N x F (message features broadcast over samples).
  Var repeat_row(Var row, int n) {
    if (val(row).rows() != 1) throw std::invalid_argument("repeat_row: input must be a row");
    Mat<S> v = val(row).replicate(n, 1);
    return unary(std::move(v), row, [this](int, Var r2, const Mat<S>& g) {
      if (needs(r2)) grad_ref(r2).noalias() += g.colwise().sum();
    });
  }

  // Column-major reshape (element order preserved).
  Var reshape(Var a, int rows, int cols) {
    const Mat<S>& x = val(a);
    if (x.size() != static_cast<Eigen::Index>(rows) * cols)
      throw std::invalid_argument("reshape: size mismatch");
    Mat<S> v = Eigen::Map<const Mat<S>>(x.data(), rows, cols);
    const int ar = static_cast<int>(x.rows()), ac = static_cast<int>(x.cols());
    return unary(std::move(v), a, [this, ar, ac](int, Var a2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2) += Eigen::Map<const Mat<S>>(g.data(), ar, ac);
    });
  }

  // ---- nonlinearities ---------------------------------------------------

  Var relu(Var a) {
    Mat<S> v = val(a).cwiseMax(S(0));
    return unary(std::move(v), a, [this](int out, Var a2, const Mat<S>& g) {
      acc(a2, (val(a2).array() > S(0)).template cast<S>().matrix().cwiseProduct(g));
      (void)out;
    });
  }

  Var softplus(Var a) {
    Mat<S> v = val(a).unaryExpr([](S x) {
      return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    });
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      acc(a2, val(a2).unaryExpr([](S x) { return sigmoid_scalar(x); }).cwiseProduct(g));
    });
  }

  Var sigmoid(Var a) {
    Mat<S> v = val(a).unaryExpr([](S x) { return sigmoid_scalar(x); });
    return unary(std::move(v), a, [this](int out, Var a2, const Mat<S>& g) {
      const Mat<S>& y = val_by_id(out);
      acc(a2, (y.array() * (S(1) - y.array())).matrix().cwiseProduct(g));
    });
  }

  Var tanh(Var a) {
    Mat<S> v = val(a).unaryExpr([](S x) { return std::tanh(x); });
    return unary(std::move(v), a, [this](int out, Var a2, const Mat<S>& g) {
      const Mat<S>& y = val_by_id(out);
      acc(a2, (S(1) - y.array().square()).matrix().cwiseProduct(g));
    });
  }

  Var exp(Var a) {
    Mat<S> v = val(a).array().exp();
    return unary(std::move(v), a, [this](int out, Var a2, const Mat<S>& g) {
      acc(a2, val_by_id(out).cwiseProduct(g));
    });
  }

  Var square(Var a) {
    Mat<S> v = val(a).array().square();
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      acc(a2, (S(2) * val(a2).array()).matrix().cwiseProduct(g));
    });
  }

  // Hard clip to [0,1]; subgradient passes where the input lies in [0,1].
  Var clamp01(Var a) {
    Mat<S> v = val(a).array().min(S(1)).max(S(0));
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      const auto& x = val(a2).array();
      acc(a2, ((x >= S(0)) && (x <= S(1))).template cast<S>().matrix().cwiseProduct(g));
    });
  }

  // ---- reductions ---------------------------------------------------------

  Var sum(Var a) {
    Mat<S> v(1, 1);
    v(0, 0) = val(a).sum();
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2).array() += g(0, 0);
    });
  }

  Var mean(Var a) {
    const S n = static_cast<S>(val(a).size());
    Mat<S> v(1, 1);
    v(0, 0) = val(a).sum() / n;
    return unary(std::move(v), a, [this, n](int, Var a2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2).array() += g(0, 0) / n;
    });
  }

  Var rowwise_sum(Var a) {  // N x C -> N x 1
    Mat<S> v = val(a).rowwise().sum();
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2).colwise() += g.col(0);
    });
  }

  Var colwise_sum(Var a) {  // N x C -> 1 x C
    Mat<S> v = val(a).colwise().sum();
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      if (needs(a2)) grad_ref(a2).rowwise() += g.row(0);
    });
  }

  // Per-column exclusive prefix sum down the rows (compositing transmittance).
  Var cumsum_exclusive_rows(Var a) {
    const Mat<S>& x = val(a);
    Mat<S> v(x.rows(), x.cols());
    if (x.rows() > 0) {
      v.row(0).setZero();
      for (Eigen::Index r = 1; r < x.rows(); ++r) v.row(r) = v.row(r - 1) + x.row(r - 1);
    }
    return unary(std::move(v), a, [this](int, Var a2, const Mat<S>& g) {
      if (!needs(a2)) return;
      Mat<S> suffix(g.rows(), g.cols());
      if (g.rows() > 0) {
        suffix.row(g.rows() - 1).setZero();
        for (Eigen::Index r = g.rows() - 2; r >= 0; --r)
          suffix.row(r) = suffix.row(r + 1) + g.row(r + 1);
      }
      grad_ref(a2) += suffix;
    });
  }

  // ---- fused losses -------------------------------------------------------

  // Stable binary cross-entropy on logits vs {0,1} targets, mean over entries.
  Var bce_with_logits(Var logits, const Mat<S>& targets) {
    const Mat<S>& x = val(logits);
    if (x.rows() != targets.rows() || x.cols() != targets.cols())
      throw std::invalid_argument("bce_with_logits: shape mismatch");
    const S n = static_cast<S>(x.size());
    S total = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const S xi = x(i), ti = targets(i);
      total += std::max(xi, S(0)) - xi * ti + std::log1p(std::exp(-std::abs(xi)));
    }
    Mat<S> v(1, 1);
    v(0, 0) = total / n;
    Mat<S> t = targets;
    return unary(std::move(v), logits, [this, t, n](int, Var l2, const Mat<S>& g) {
      if (!needs(l2)) return;
      const Mat<S>& x2 = val(l2);
      Mat<S> d = x2.unaryExpr([](S xx) { return sigmoid_scalar(xx); }) - t;
      grad_ref(l2) += d * (g(0, 0) / n);
    });
  }

  // ---- image ops (feature maps stored channels x (H*W), pixel = y*W + x) --

  Var conv2d(Var x, Var w, Var bias, const ConvDims& d) {
    const int cin = static_cast<int>(val(x).rows());
    if (val(x).cols() != static_cast<Eigen::Index>(d.height) * d.width)
      throw std::invalid_argument("conv2d: input size mismatch");
    if (val(w).cols() != static_cast<Eigen::Index>(cin) * d.ksize * d.ksize)
      throw std::invalid_argument("conv2d: weight shape mismatch");
    auto cols = std::make_shared<Mat<S>>(im2col(val(x), d));
    Mat<S> v = val(w) * (*cols);
    v.colwise() += val(bias).col(0);
    const ConvDims dd = d;
    return make_node(std::move(v), {x, w, bias},
                     [this, cols, dd](int out, const std::vector<Var>& in, const Mat<S>& g) {
                       (void)out;
                       Var x2 = in[0], w2 = in[1], b2 = in[2];
                       if (needs(w2)) grad_ref(w2).noalias() += g * cols->transpose();
                       if (needs(b2)) grad_ref(b2).noalias() += g.rowwise().sum();
                       if (needs(x2)) {
                         Mat<S> dcols = val(w2).transpose() * g;
                         col2im_add(grad_ref(x2), dcols, dd);
                       }
                     });
  }

  struct BatchNormState {
    Mat<S> running_mean, running_var;  // C x 1
    S momentum = S(0.1);
    S eps = S(1e-5);
  };

  // x: C x N. `use_batch_stats` selects which statistics normalize the
  // input (batch moments, with the full batch-norm backward, or the stored
  // running estimates treated as constants). `update_stats` folds the batch
  // moments into the running estimates either way.
  Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, bool use_batch_stats,
                 bool update_stats) {
    const Mat<S>& xv = val(x);
    const Eigen::Index c = xv.rows(), n = xv.cols();
    if (n < 1) throw std::invalid_argument("batch_norm: empty input");
    if (update_stats) {
      Mat<S> bmu = xv.rowwise().mean();
      Mat<S> centered = xv.colwise() - bmu.col(0);
      Mat<S> bvar = centered.array().square().matrix().rowwise().mean();
      state.running_mean = (S(1) - state.momentum) * state.running_mean + state.momentum * bmu;
      state.running_var = (S(1) - state.momentum) * state.running_var + state.momentum * bvar;
    }
    Mat<S> mu(c, 1), var(c, 1);
    if (use_batch_stats) {
      mu = xv.rowwise().mean();
      Mat<S> centered = xv.colwise() - mu.col(0);
      var = centered.array().square().matrix().rowwise().mean();
    } else {
      mu = state.running_mean;
      var = state.running_var;
    }
    Mat<S> inv_std = (var.array() + state.eps).rsqrt();
    auto xhat = std::make_shared<Mat<S>>(((xv.colwise() - mu.col(0)).array().colwise() * inv_std.col(0).array()).matrix());
    Mat<S> v = (xhat->array().colwise() * val(gamma).col(0).array()).matrix();
    v.colwise() += val(beta).col(0);
    auto istd = std::make_shared<Mat<S>>(inv_std);
    return make_node(std::move(v), {x, gamma, beta},
                     [this, xhat, istd, n, use_batch_stats](int, const std::vector<Var>& in, const Mat<S>& g) {
                       Var x2 = in[0], g2 = in[1], b2 = in[2];
                       if (needs(g2)) grad_ref(g2).noalias() += g.cwiseProduct(*xhat).rowwise().sum();
                       if (needs(b2)) grad_ref(b2).noalias() += g.rowwise().sum();
                       if (!needs(x2)) return;
                       Mat<S> dxhat = (g.array().colwise() * val(g2).col(0).array()).matrix();
                       if (use_batch_stats) {
                         // Standard batch-norm backward through the batch statistics.
                         Mat<S> sum_dxhat = dxhat.rowwise().sum();
                         Mat<S> sum_dxhat_xhat = dxhat.cwiseProduct(*xhat).rowwise().sum();
                         Mat<S> dx = (S(n) * dxhat.array()
                                      - (sum_dxhat * Mat<S>::Ones(1, n)).array()
                                      - xhat->array() * (sum_dxhat_xhat * Mat<S>::Ones(1, n)).array())
                                         .colwise() *
                                     (istd->col(0).array() / S(n));
                         grad_ref(x2) += dx.matrix();
                       } else {
                         grad_ref(x2) += (dxhat.array().colwise() * istd->col(0).array()).matrix();
                       }
                     });
  }

  // Fixed linear resampling (rotation / scaling / blur): map is
  // (out_pixels x in_pixels), applied per channel row of x.
  Var image_map(Var x, std::shared_ptr<const SpMat<S>> map) {
    if (val(x).cols() != map->cols()) throw std::invalid_argument("image_map: size mismatch");
    Mat<S> v = ((*map) * val(x).transpose()).transpose();
    auto map_t = std::make_shared<SpMat<S>>(map->transpose());
    return unary(std::move(v), x, [this, map_t](int, Var x2, const Mat<S>& g) {
      if (needs(x2)) grad_ref(x2) += ((*map_t) * g.transpose()).transpose();
    });
  }

  Var global_avg_pool(Var x) {  // C x HW -> 1 x C
    const S n = static_cast<S>(val(x).cols());
    Mat<S> v = val(x).rowwise().mean().transpose();
    return unary(std::move(v), x, [this, n](int, Var x2, const Mat<S>& g) {
      if (needs(x2)) grad_ref(x2).colwise() += (g.transpose() / n).col(0);
    });
  }

  // ---- driver -------------------------------------------------------------

  void backward(Var root) {
    auto& r = node(root);
    if (r.value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    ensure_grad(root.id);
    nodes_[root.id].grad(0, 0) = S(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && n.requires_grad && n.has_grad) {
        n.back();
        // Intermediates are dead once their closure has run.
        n.value.resize(0, 0);
        n.grad.resize(0, 0);
        n.has_grad = false;
      }
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::function<void()> back;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::vector<Node> nodes_;
  mutable Mat<S> zero_;

  static S sigmoid_scalar(S x) {
    if (x >= S(0)) {
      const S e = std::exp(-x);
      return S(1) / (S(1) + e);
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
  }

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= size()) throw std::out_of_range("bad var");
    return nodes_[v.id];
  }
  Node& node(Var v) { return const_cast<Node&>(static_cast<const Tape*>(this)->node(v)); }

  const Mat<S>& val_by_id(int id) const { return nodes_[id].value; }

  bool needs(Var v) const { return node(v).requires_grad; }

  void ensure_grad(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
  }

  Mat<S>& grad_ref(Var v) {
    ensure_grad(v.id);
    return nodes_[v.id].grad;
  }

  void acc(Var v, const Mat<S>& delta) {
    if (needs(v)) grad_ref(v) += delta;
  }
  void acc_neg(Var v, const Mat<S>& delta) {
    if (needs(v)) grad_ref(v) -= delta;
  }

  Var push(Mat<S> v, bool requires_grad) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{size() - 1};
  }

  Var make_node(Mat<S> v, std::vector<Var> inputs,
                std::function<void(int, const std::vector<Var>&, const Mat<S>&)> back) {
    bool rg = false;
    for (Var in : inputs) rg = rg || needs(in);
    Var out = push(std::move(v), rg);
    if (rg) {
      const int out_id = out.id;
      nodes_[out_id].back = [this, out_id, inputs = std::move(inputs), back = std::move(back)]() {
        back(out_id, inputs, nodes_[out_id].grad);
      };
    }
    return out;
  }

  Var unary(Mat<S> v, Var a, std::function<void(int, Var, const Mat<S>&)> back) {
    return make_node(std::move(v), {a},
                     [back = std::move(back)](int out, const std::vector<Var>& in, const Mat<S>& g) {
                       back(out, in[0], g);
                     });
  }

  Var unary_or_binary(Mat<S> v, Var a, Var b,
                      std::function<void(int, Var, Var, const Mat<S>&)> back) {
    return make_node(std::move(v), {a, b},
                     [back = std::move(back)](int out, const std::vector<Var>& in, const Mat<S>& g) {
                       back(out, in[0], in[1], g);
                     });
  }

  Var concat(const std::vector<Var>& parts, bool along_cols) {
    if (parts.empty()) throw std::invalid_argument("concat: empty");
    Eigen::Index rows = val(parts[0]).rows(), cols = val(parts[0]).cols();
    for (size_t i = 1; i < parts.size(); ++i) {
      if (along_cols) {
        if (val(parts[i]).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += val(parts[i]).cols();
      } else {
        if (val(parts[i]).cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += val(parts[i]).rows();
      }
    }
    Mat<S> v(rows, cols);
    if (along_cols) {
      Eigen::Index c0 = 0;
      for (Var p : parts) {
        v.middleCols(c0, val(p).cols()) = val(p);
        c0 += val(p).cols();
      }
    } else {
      Eigen::Index r0 = 0;
      for (Var p : parts) {
        v.middleRows(r0, val(p).rows()) = val(p);
        r0 += val(p).rows();
      }
    }
    return make_node(std::move(v), parts,
                     [this, along_cols](int out, const std::vector<Var>& in, const Mat<S>& g) {
                       (void)out;
                       Eigen::Index o = 0;
                       for (Var p : in) {
                         const Eigen::Index len = along_cols ? val(p).cols() : val(p).rows();
                         if (needs(p)) {
                           if (along_cols)
                             grad_ref(p) += g.middleCols(o, len);
                           else
                             grad_ref(p) += g.middleRows(o, len);
                         }
                         o += len;
                       }
                     });
  }

  static int conv_src_index(int i, int n, bool reflect) {
    if (i >= 0 && i < n) return i;
    if (!reflect) return -1;  // zero fill
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  }

  static Mat<S> im2col(const Mat<S>& x, const ConvDims& d) {
    const int cin = static_cast<int>(x.rows());
    const int oh = d.out_height(), ow = d.out_width();
    Mat<S> cols = Mat<S>::Zero(static_cast<Eigen::Index>(cin) * d.ksize * d.ksize,
                               static_cast<Eigen::Index>(oh) * ow);
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
        for (int ky = 0; ky < d.ksize; ++ky) {
          const int iy = conv_src_index(oy * d.stride + ky - d.pad, d.height, d.reflect_pad);
          if (iy < 0) continue;
          for (int kx = 0; kx < d.ksize; ++kx) {
            const int ix = conv_src_index(ox * d.stride + kx - d.pad, d.width, d.reflect_pad);
            if (ix < 0) continue;
            const Eigen::Index pix = static_cast<Eigen::Index>(iy) * d.width + ix;
            for (int c = 0; c < cin; ++c) {
              cols(static_cast<Eigen::Index>(c) * d.ksize * d.ksize + ky * d.ksize + kx, col) =
                  x(c, pix);
            }
          }
        }
      }
    }
    return cols;
  }

  static void col2im_add(Mat<S>& dx, const Mat<S>& dcols, const ConvDims& d) {
    const int cin = static_cast<int>(dx.rows());
    const int oh = d.out_height(), ow = d.out_width();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
        for (int ky = 0; ky < d.ksize; ++ky) {
          const int iy = conv_src_index(oy * d.stride + ky - d.pad, d.height, d.reflect_pad);
          if (iy < 0) continue;
          for (int kx = 0; kx < d.ksize; ++kx) {
            const int ix = conv_src_index(ox * d.stride + kx - d.pad, d.width, d.reflect_pad);
            if (ix < 0) continue;
            const Eigen::Index pix = static_cast<Eigen::Index>(iy) * d.width + ix;
            for (int c = 0; c < cin; ++c) {
              dx(c, pix) +=
                  dcols(static_cast<Eigen::Index>(c) * d.ksize * d.ksize + ky * d.ksize + kx, col);
            }
          }
        }
      }
    }
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
};

}  // namespace nerfmark::ad
