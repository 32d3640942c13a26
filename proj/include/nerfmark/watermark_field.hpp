// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nerfmark/encoding.hpp"
#include "nerfmark/nn.hpp"

namespace nerfmark {

// Fixed-length binary payload. Lengths follow the supported capacity set.
struct Message {
  std::vector<uint8_t> bits;

  static const std::vector<int>& supported_lengths() {
    static const std::vector<int> k{4, 8, 16, 32, 48};
    return k;
  }

  static bool length_supported(int n) {
    for (int k : supported_lengths())
      if (k == n) return true;
    return false;
  }

  int length() const { return static_cast<int>(bits.size()); }

  void validate() const {
    if (!length_supported(length()))
      throw std::invalid_argument("message: unsupported length " + std::to_string(length()));
    for (uint8_t b : bits)
      if (b != 0 && b != 1) throw std::invalid_argument("message: bits must be 0 or 1");
  }

  // "0110" style.
  static Message from_bitstring(const std::string& s) {
    Message m;
    for (char c : s) {
      if (c == '0')
        m.bits.push_back(0);
      else if (c == '1')
        m.bits.push_back(1);
      else
        throw std::invalid_argument("message: bad character in bitstring");
    }
    m.validate();
    return m;
  }

  // Hex payload with an explicit bit length, most-significant bit first.
  static Message from_hex(const std::string& hex, int n_bits) {
    Message m;
    std::vector<uint8_t> nibble_bits;
    for (char c : hex) {
      int v;
      if (c >= '0' && c <= '9')
        v = c - '0';
      else if (c >= 'a' && c <= 'f')
        v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F')
        v = c - 'A' + 10;
      else
        throw std::invalid_argument("message: bad hex digit");
      for (int k = 3; k >= 0; --k) nibble_bits.push_back((v >> k) & 1);
    }
    if (static_cast<int>(nibble_bits.size()) < n_bits)
      throw std::invalid_argument("message: hex string shorter than bit length");
    m.bits.assign(nibble_bits.end() - n_bits, nibble_bits.end());
    m.validate();
    return m;
  }

  static Message from_index(uint64_t index, int n_bits) {
    Message m;
    m.bits.resize(n_bits);
    for (int i = 0; i < n_bits; ++i) m.bits[i] = (index >> (n_bits - 1 - i)) & 1;
    m.validate();
    return m;
  }

  std::string to_bitstring() const {
    std::string s;
    for (uint8_t b : bits) s += b ? '1' : '0';
    return s;
  }

  template <typename S>
  ad::Mat<S> to_row() const {
    ad::Mat<S> r(1, length());
    for (int i = 0; i < length(); ++i) r(0, i) = static_cast<S>(bits[i]);
    return r;
  }

  bool operator==(const Message& o) const { return bits == o.bits; }
};

struct WatermarkFieldConfig {
  int n_bits = 4;
  int nc = 64;        // color feature width
  int nm = 256;       // message feature width
  int e_hidden = 64;
  int g_hidden = 64;
  double delta_scale = 1.0;  // in (0,1]; scales the bounded color shift
  bool use_cff = true;       // ablation: bypass the color feature field
  bool use_mff = true;       // ablation: bypass the message feature field
  EncodingConfig enc_pos{10, true};
  EncodingConfig enc_dir{4, true};

  int enc_pos_dim() const { return enc_pos.encoded_dim(3); }
  int enc_dir_dim() const { return enc_dir.encoded_dim(3); }
  int fusion_color_dim() const { return use_cff ? nc : 3; }
  int fusion_msg_dim() const { return use_mff ? nm : n_bits; }

  void validate() const {
    if (!Message::length_supported(n_bits))
      throw std::invalid_argument("watermark: unsupported message length");
    if (delta_scale <= 0 || delta_scale > 1)
      throw std::invalid_argument("watermark: delta_scale must be in (0,1]");
  }
};

// Message-conditioned color representation layered on top of a frozen base
// field. A color feature encoder mixes base color with encoded position and
// direction, a message encoder lifts the payload, and a fusion MLP emits a
// bounded residual on the base color:
//
//   c_m = c + delta_scale * c * (1 - c) * tanh(u)
//
// The c(1-c) factor is the first-order form of a logit-space shift, so the
// output stays inside [0,1] for any u, gradients taper near the bounds the
// way a sigmoid does, and a zero-initialized fusion head gives c_m == c
// exactly at the start of training.
template <typename S>
struct WatermarkField {
  using Tape = ad::Tape<S>;
  using Var = typename Tape::Var;

  WatermarkFieldConfig cfg;
  nn::Mlp<S> color_enc;    // (3 + enc_x + enc_d) -> e_hidden -> e_hidden -> nc
  nn::Mlp<S> msg_enc;      // n_bits -> nm -> nm
  ad::Mat<S> g_w0a, g_b0;  // fusion layer 0, per-sample block (f_c | c)
  ad::Mat<S> g_w0b;        // fusion layer 0, message block (broadcast once)
  nn::Mlp<S> fusion_tail;  // g_hidden -> g_hidden -> 3 (zero-init last)

  static WatermarkField create(const WatermarkFieldConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    WatermarkField f;
    f.cfg = cfg;
    const int e_in = 3 + cfg.enc_pos_dim() + cfg.enc_dir_dim();
    f.color_enc = nn::Mlp<S>::create({e_in, cfg.e_hidden, cfg.e_hidden, cfg.nc}, rng);
    f.msg_enc = nn::Mlp<S>::create({cfg.n_bits, cfg.nm, cfg.nm}, rng);
    f.g_w0a = nn::glorot_uniform<S>(cfg.fusion_color_dim() + 3, cfg.g_hidden, rng);
    f.g_w0b = nn::glorot_uniform<S>(cfg.fusion_msg_dim(), cfg.g_hidden, rng);
    f.g_b0 = ad::Mat<S>::Zero(1, cfg.g_hidden);
    f.fusion_tail = nn::Mlp<S>::create({cfg.g_hidden, cfg.g_hidden, 3}, rng);
    f.fusion_tail.zero_last_layer();
    return f;
  }

  void register_params(nn::ParamList<S>& list, const std::string& prefix) {
    color_enc.register_params(list, prefix + ".e");
    msg_enc.register_params(list, prefix + ".d");
    list.add(prefix + ".g.w0a", &g_w0a);
    list.add(prefix + ".g.w0b", &g_w0b);
    list.add(prefix + ".g.b0", &g_b0);
    fusion_tail.register_params(list, prefix + ".g.tail");
  }

  struct Vars {
    nn::MlpVars<S> color_enc;
    nn::MlpVars<S> msg_enc;
    Var g_w0a, g_w0b, g_b0;
    nn::MlpVars<S> fusion_tail;

    void flatten(std::vector<Var>& out) const {  // mirrors register_params
      nn::flatten_vars(color_enc, out);
      nn::flatten_vars(msg_enc, out);
      out.push_back(g_w0a);
      out.push_back(g_w0b);
      out.push_back(g_b0);
      nn::flatten_vars(fusion_tail, out);
    }
  };

  Vars vars(Tape& t, bool trainable) const {
    Vars v;
    v.color_enc = nn::mlp_vars(t, color_enc, trainable);
    v.msg_enc = nn::mlp_vars(t, msg_enc, trainable);
    v.g_w0a = trainable ? t.leaf(g_w0a) : t.constant(g_w0a);
    v.g_w0b = trainable ? t.leaf(g_w0b) : t.constant(g_w0b);
    v.g_b0 = trainable ? t.leaf(g_b0) : t.constant(g_b0);
    v.fusion_tail = nn::mlp_vars(t, fusion_tail, trainable);
    return v;
  }

  // f_c over a batch: c (N x 3), enc_x (N x enc_pos_dim), enc_d (N x enc_dir_dim).
  Var encode_color_feature(Tape& t, const Vars& v, Var c, Var enc_x, Var enc_d) const {
    Var in = t.concat_cols({c, enc_x, enc_d});
    return nn::mlp_forward(t, v.color_enc, in, nn::Act::relu, nn::Act::none);
  }

  // f_M: 1 x nm from a 1 x n_bits row of {0,1}.
  Var encode_message_feature(Tape& t, const Vars& v, Var msg_row) const {
    if (t.val(msg_row).cols() != cfg.n_bits)
      throw std::invalid_argument("watermark: message length does not match model");
    return nn::mlp_forward(t, v.msg_enc, msg_row, nn::Act::relu, nn::Act::none);
  }

  // Watermarked colors for a batch of samples. `msg_feat` is the 1 x *
  // fusion message block (f_M, or the raw message row when the message
  // feature field is bypassed).
  Var watermarked_color(Tape& t, const Vars& v, Var c, Var enc_x, Var enc_d,
                        Var msg_feat) const {
    Var color_block = cfg.use_cff ? encode_color_feature(t, v, c, enc_x, enc_d) : c;
    Var per_sample = t.concat_cols({color_block, c});
    Var h = t.add_row_broadcast(t.matmul(per_sample, v.g_w0a),
                                t.add_row_broadcast(t.matmul(msg_feat, v.g_w0b), v.g_b0));
    h = t.relu(h);
    Var u = nn::mlp_forward(t, v.fusion_tail, h, nn::Act::relu, nn::Act::none);
    // Bounded residual: c + s * c(1-c) * tanh(u).
    Var bound = t.mul(c, t.add_scalar(t.neg(c), S(1)));  // c(1-c), constant when c is
    Var delta = t.mul(bound, t.scale(t.tanh(u), static_cast<S>(cfg.delta_scale)));
    return t.add(c, delta);
  }

  // Fusion message block for a given message (f_M or raw bits).
  Var fusion_message_block(Tape& t, const Vars& v, const Message& m) const {
    Var row = t.constant(m.template to_row<S>());
    return cfg.use_mff ? encode_message_feature(t, v, row) : row;
  }

  // ---- single-point convenience API ----

  ad::Mat<S> color_feature_point(const Eigen::Matrix<S, 3, 1>& c,
                                 const Eigen::Matrix<S, 3, 1>& x,
                                 const Eigen::Matrix<S, 3, 1>& d) const {
    check_point_inputs(c, d);
    Tape t;
    auto v = vars(t, false);
    Var f = encode_color_feature(t, v, t.constant(c.transpose()),
                                 t.constant(encode_batch<S>(ad::Mat<S>(x.transpose()), cfg.enc_pos)),
                                 t.constant(encode_batch<S>(ad::Mat<S>(d.transpose()), cfg.enc_dir)));
    return t.val(f);
  }

  ad::Mat<S> message_feature(const Message& m) const {
    Tape t;
    auto v = vars(t, false);
    Var f = encode_message_feature(t, v, t.constant(m.template to_row<S>()));
    return t.val(f);
  }

  Eigen::Matrix<S, 3, 1> watermarked_color_point(const Eigen::Matrix<S, 3, 1>& c,
                                                 const Eigen::Matrix<S, 3, 1>& x,
                                                 const Eigen::Matrix<S, 3, 1>& d,
                                                 const Message& m) const {
    check_point_inputs(c, d);
    Tape t;
    auto v = vars(t, false);
    Var msg_block = fusion_message_block(t, v, m);
    Var cm = watermarked_color(
        t, v, t.constant(c.transpose()),
        t.constant(encode_batch<S>(ad::Mat<S>(x.transpose()), cfg.enc_pos)),
        t.constant(encode_batch<S>(ad::Mat<S>(d.transpose()), cfg.enc_dir)), msg_block);
    return t.val(cm).row(0).transpose();
  }

 private:
  static void check_point_inputs(const Eigen::Matrix<S, 3, 1>& c,
                                 const Eigen::Matrix<S, 3, 1>& d) {
    if (c.minCoeff() < S(0) || c.maxCoeff() > S(1))
      throw std::invalid_argument("watermark: base color outside [0,1]");
    if (std::abs(d.norm() - S(1)) > S(1e-6))
      throw std::invalid_argument("watermark: direction is not unit length");
  }
};

}  // namespace nerfmark
