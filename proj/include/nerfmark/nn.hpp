// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nerfmark/ad.hpp"
#include "nerfmark/rng.hpp"

namespace nerfmark::nn {

using ad::Mat;

// Named views onto a model's parameter matrices. Checkpointing and the
// optimizer both walk this list, so registration order must be stable.
template <typename S>
struct ParamList {
  std::vector<std::string> names;
  std::vector<Mat<S>*> mats;

  void add(const std::string& name, Mat<S>* m) {
    names.push_back(name);
    mats.push_back(m);
  }
  size_t size() const { return mats.size(); }
};

template <typename S>
Mat<S> glorot_uniform(int rows, int cols, std::mt19937_64& rng) {
  const S limit = std::sqrt(S(6) / S(rows + cols));
  std::uniform_real_distribution<double> dist(-double(limit), double(limit));
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = static_cast<S>(dist(rng));
  return m;
}

enum class Act { none, relu, softplus, sigmoid, tanh };

template <typename S>
typename ad::Tape<S>::Var activate(ad::Tape<S>& t, typename ad::Tape<S>::Var x, Act a) {
  switch (a) {
    case Act::none: return x;
    case Act::relu: return t.relu(x);
    case Act::softplus: return t.softplus(x);
    case Act::sigmoid: return t.sigmoid(x);
    case Act::tanh: return t.tanh(x);
  }
  throw std::logic_error("bad activation");
}

// Plain fully-connected stack. Weight i maps dims[i] -> dims[i+1];
// inputs are row-batched (N x dims[0]).
template <typename S>
struct Mlp {
  std::vector<Mat<S>> w;
  std::vector<Mat<S>> b;

  static Mlp create(const std::vector<int>& dims, std::mt19937_64& rng) {
    Mlp m;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
      m.w.push_back(glorot_uniform<S>(dims[i], dims[i + 1], rng));
      m.b.push_back(Mat<S>::Zero(1, dims[i + 1]));
    }
    return m;
  }

  void zero_last_layer() {
    w.back().setZero();
    b.back().setZero();
  }

  void register_params(ParamList<S>& list, const std::string& prefix) {
    for (size_t i = 0; i < w.size(); ++i) {
      list.add(prefix + ".w" + std::to_string(i), &w[i]);
      list.add(prefix + ".b" + std::to_string(i), &b[i]);
    }
  }
};

template <typename S>
struct MlpVars {
  std::vector<typename ad::Tape<S>::Var> w, b;
};

// Leaf order must mirror Mlp::register_params for gradient collection.
template <typename S>
void flatten_vars(const MlpVars<S>& m, std::vector<typename ad::Tape<S>::Var>& out) {
  for (size_t i = 0; i < m.w.size(); ++i) {
    out.push_back(m.w[i]);
    out.push_back(m.b[i]);
  }
}

template <typename S>
MlpVars<S> mlp_vars(ad::Tape<S>& t, const Mlp<S>& m, bool trainable) {
  MlpVars<S> v;
  for (size_t i = 0; i < m.w.size(); ++i) {
    v.w.push_back(trainable ? t.leaf(m.w[i]) : t.constant(m.w[i]));
    v.b.push_back(trainable ? t.leaf(m.b[i]) : t.constant(m.b[i]));
  }
  return v;
}

template <typename S>
typename ad::Tape<S>::Var mlp_forward(ad::Tape<S>& t, const MlpVars<S>& m,
                                      typename ad::Tape<S>::Var x, Act hidden, Act out) {
  auto h = x;
  for (size_t i = 0; i < m.w.size(); ++i) {
    h = t.add_row_broadcast(t.matmul(h, m.w[i]), m.b[i]);
    h = activate(t, h, i + 1 < m.w.size() ? hidden : out);
  }
  return h;
}

// Adam with bias correction and an externally supplied learning rate
// (the scheduler lives in the training loop). Moment buffers are exposed
// so checkpoints can capture exact optimizer state.
template <typename S>
class Adam {
 public:
  Adam(S beta1, S beta2, S eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const ParamList<S>& params) {
    m_.clear();
    v_.clear();
    for (auto* p : params.mats) {
      m_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      v_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
    }
    t_ = 0;
  }

  void step(const ParamList<S>& params, const std::vector<Mat<S>>& grads, S lr) {
    if (grads.size() != params.size() || m_.size() != params.size())
      throw std::invalid_argument("adam: size mismatch");
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, S(t_));
    const S bc2 = S(1) - std::pow(beta2_, S(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Mat<S>& p = *params.mats[i];
      m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * grads[i].cwiseProduct(grads[i]);
      p.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  std::vector<Mat<S>>& moment1() { return m_; }
  std::vector<Mat<S>>& moment2() { return v_; }

 private:
  S beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace nerfmark::nn
