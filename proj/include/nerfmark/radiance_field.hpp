// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>

#include "nerfmark/encoding.hpp"
#include "nerfmark/nn.hpp"

namespace nerfmark {

struct BaseFieldConfig {
  int layers = 4;
  int width = 64;
  int z_width = 64;
  int skip_layer = -1;  // trunk layer that re-reads the encoded position; -1 = none
  int color_hidden = 64;
  EncodingConfig enc_pos{10, true};
  EncodingConfig enc_dir{4, true};

  int enc_pos_dim() const { return enc_pos.encoded_dim(3); }
  int enc_dir_dim() const { return enc_dir.encoded_dim(3); }
};

// Base scene representation: a trunk MLP from encoded position to a density
// head (softplus, so sigma >= 0) and a feature z, plus a view-conditioned
// color branch ending in a sigmoid so colors stay inside [0,1]^3.
template <typename S>
struct BaseField {
  using Tape = ad::Tape<S>;
  using Var = typename Tape::Var;

  BaseFieldConfig cfg;
  nn::Mlp<S> trunk;
  ad::Mat<S> sigma_w, sigma_b;  // width -> 1
  ad::Mat<S> z_w, z_b;          // width -> z_width
  nn::Mlp<S> color;             // (z_width + enc_dir) -> hidden -> 3

  static BaseField create(const BaseFieldConfig& cfg, std::mt19937_64& rng) {
    BaseField f;
    f.cfg = cfg;
    std::vector<int> dims{cfg.enc_pos_dim()};
    for (int i = 0; i < cfg.layers; ++i) dims.push_back(cfg.width);
    f.trunk = nn::Mlp<S>::create(dims, rng);
    if (cfg.skip_layer >= 0) {
      // Widen the skip layer's input to take the re-injected encoding.
      const int in = cfg.width + cfg.enc_pos_dim();
      f.trunk.w[cfg.skip_layer] = nn::glorot_uniform<S>(in, cfg.width, rng);
    }
    f.sigma_w = nn::glorot_uniform<S>(cfg.width, 1, rng);
    f.sigma_b = ad::Mat<S>::Zero(1, 1);
    f.z_w = nn::glorot_uniform<S>(cfg.width, cfg.z_width, rng);
    f.z_b = ad::Mat<S>::Zero(1, cfg.z_width);
    f.color = nn::Mlp<S>::create({cfg.z_width + cfg.enc_dir_dim(), cfg.color_hidden, 3}, rng);
    return f;
  }

  void register_params(nn::ParamList<S>& list, const std::string& prefix) {
    trunk.register_params(list, prefix + ".trunk");
    list.add(prefix + ".sigma_w", &sigma_w);
    list.add(prefix + ".sigma_b", &sigma_b);
    list.add(prefix + ".z_w", &z_w);
    list.add(prefix + ".z_b", &z_b);
    color.register_params(list, prefix + ".color");
  }

  struct Vars {
    nn::MlpVars<S> trunk;
    Var sigma_w, sigma_b, z_w, z_b;
    nn::MlpVars<S> color;

    void flatten(std::vector<Var>& out) const {  // mirrors register_params
      nn::flatten_vars(trunk, out);
      out.push_back(sigma_w);
      out.push_back(sigma_b);
      out.push_back(z_w);
      out.push_back(z_b);
      nn::flatten_vars(color, out);
    }
  };

  Vars vars(Tape& t, bool trainable) const {
    Vars v;
    v.trunk = nn::mlp_vars(t, trunk, trainable);
    v.sigma_w = trainable ? t.leaf(sigma_w) : t.constant(sigma_w);
    v.sigma_b = trainable ? t.leaf(sigma_b) : t.constant(sigma_b);
    v.z_w = trainable ? t.leaf(z_w) : t.constant(z_w);
    v.z_b = trainable ? t.leaf(z_b) : t.constant(z_b);
    v.color = nn::mlp_vars(t, color, trainable);
    return v;
  }

  // Trunk forward shared by the sigma and color paths. enc_x: N x enc_pos_dim.
  Var trunk_forward(Tape& t, const Vars& v, Var enc_x) const {
    Var h = enc_x;
    for (size_t i = 0; i < v.trunk.w.size(); ++i) {
      if (static_cast<int>(i) == cfg.skip_layer) h = t.concat_cols({h, enc_x});
      h = t.relu(t.add_row_broadcast(t.matmul(h, v.trunk.w[i]), v.trunk.b[i]));
      check_finite(t, h, "trunk layer " + std::to_string(i));
    }
    return h;
  }

  // sigma: N x 1 (>= 0), z: N x z_width.
  std::pair<Var, Var> query_sigma_z(Tape& t, const Vars& v, Var enc_x) const {
    Var h = trunk_forward(t, v, enc_x);
    Var sigma = t.softplus(t.add_row_broadcast(t.matmul(h, v.sigma_w), v.sigma_b));
    Var z = t.add_row_broadcast(t.matmul(h, v.z_w), v.z_b);
    check_finite(t, sigma, "sigma head");
    return {sigma, z};
  }

  // Density only (importance-sampling weights need no colors).
  Var query_sigma(Tape& t, const Vars& v, Var enc_x) const {
    Var h = trunk_forward(t, v, enc_x);
    return t.softplus(t.add_row_broadcast(t.matmul(h, v.sigma_w), v.sigma_b));
  }

  // c: N x 3 strictly inside (0,1).
  Var query_color(Tape& t, const Vars& v, Var z, Var enc_d) const {
    Var in = t.concat_cols({z, enc_d});
    Var c = nn::mlp_forward(t, v.color, in, nn::Act::relu, nn::Act::sigmoid);
    check_finite(t, c, "color branch");
    return c;
  }

  // ---- single-point convenience API (tests, CLI probes) ----

  std::pair<S, ad::Mat<S>> query_geometry(const Eigen::Matrix<S, 3, 1>& x) const {
    Tape t;
    auto v = vars(t, false);
    ad::Mat<S> p = x.transpose();
    if (!p.allFinite()) throw std::invalid_argument("query_geometry: non-finite position");
    auto [sigma, z] = query_sigma_z(t, v, t.constant(encode_batch<S>(p, cfg.enc_pos)));
    return {t.val(sigma)(0, 0), t.val(z)};
  }

  Eigen::Matrix<S, 3, 1> query_color_point(const ad::Mat<S>& z,
                                           const Eigen::Matrix<S, 3, 1>& d) const {
    if (std::abs(d.norm() - S(1)) > S(1e-6))
      throw std::invalid_argument("query_color: direction is not unit length");
    Tape t;
    auto v = vars(t, false);
    ad::Mat<S> dir = d.transpose();
    Var c = query_color(t, v, t.constant(z), t.constant(encode_batch<S>(dir, cfg.enc_dir)));
    return t.val(c).row(0).transpose();
  }

 private:
  static void check_finite(Tape& t, Var v, const std::string& layer) {
    if (!t.val(v).allFinite())
      throw std::runtime_error("radiance field: non-finite activations at " + layer);
  }
};

}  // namespace nerfmark
