// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "nerfmark/nn.hpp"
#include "nerfmark/watermark_field.hpp"

namespace nerfmark {

struct ExtractorConfig {
  int n_bits = 4;
  std::vector<int> widths{32, 64};  // conv block output channels, stride 2 each
  int head_hidden = 64;
  int min_input = 8;  // smallest accepted H or W
  // With single-patch steps, per-patch batch statistics make the decoder
  // converge far too slowly; the default normalizes with the running
  // estimates (updated online) during training as well.
  bool bn_batch_stats = false;
};

// CNN message decoder: stride-2 conv/batch-norm/relu blocks, global average
// pooling, then a small linear head to one logit per bit. The pooling makes
// it work on any input size at or above min_input, so size-changing
// distortions need no special casing.
template <typename S>
struct MessageExtractor {
  using Tape = ad::Tape<S>;
  using Var = typename Tape::Var;
  using BnState = typename Tape::BatchNormState;

  ExtractorConfig cfg;
  std::vector<ad::Mat<S>> conv_w;   // (C_out) x (C_in*3*3)
  std::vector<ad::Mat<S>> conv_b;   // C_out x 1
  std::vector<ad::Mat<S>> bn_gamma, bn_beta;  // C_out x 1
  mutable std::vector<BnState> bn_state;
  nn::Mlp<S> head;  // C_last -> head_hidden -> n_bits

  static MessageExtractor create(const ExtractorConfig& cfg, std::mt19937_64& rng) {
    if (cfg.widths.empty()) throw std::invalid_argument("extractor: need at least one block");
    MessageExtractor e;
    e.cfg = cfg;
    int cin = 3;
    for (int cout : cfg.widths) {
      e.conv_w.push_back(nn::glorot_uniform<S>(cout, cin * 9, rng));
      e.conv_b.push_back(ad::Mat<S>::Zero(cout, 1));
      e.bn_gamma.push_back(ad::Mat<S>::Ones(cout, 1));
      e.bn_beta.push_back(ad::Mat<S>::Zero(cout, 1));
      BnState st;
      st.running_mean = ad::Mat<S>::Zero(cout, 1);
      st.running_var = ad::Mat<S>::Ones(cout, 1);
      e.bn_state.push_back(st);
      cin = cout;
    }
    e.head = nn::Mlp<S>::create({cfg.widths.back(), cfg.head_hidden, cfg.n_bits}, rng);
    return e;
  }

  void register_params(nn::ParamList<S>& list, const std::string& prefix) {
    for (size_t i = 0; i < conv_w.size(); ++i) {
      const std::string b = prefix + ".block" + std::to_string(i);
      list.add(b + ".conv_w", &conv_w[i]);
      list.add(b + ".conv_b", &conv_b[i]);
      list.add(b + ".bn_gamma", &bn_gamma[i]);
      list.add(b + ".bn_beta", &bn_beta[i]);
    }
    head.register_params(list, prefix + ".head");
  }

  // Batch-norm running statistics are model state too (inference mode
  // depends on them); exposed for checkpointing.
  void register_stats(nn::ParamList<S>& list, const std::string& prefix) {
    for (size_t i = 0; i < bn_state.size(); ++i) {
      const std::string b = prefix + ".block" + std::to_string(i);
      list.add(b + ".bn_mean", &bn_state[i].running_mean);
      list.add(b + ".bn_var", &bn_state[i].running_var);
    }
  }

  struct Vars {
    std::vector<Var> conv_w, conv_b, bn_gamma, bn_beta;
    nn::MlpVars<S> head;

    void flatten(std::vector<Var>& out) const {  // mirrors register_params
      for (size_t i = 0; i < conv_w.size(); ++i) {
        out.push_back(conv_w[i]);
        out.push_back(conv_b[i]);
        out.push_back(bn_gamma[i]);
        out.push_back(bn_beta[i]);
      }
      nn::flatten_vars(head, out);
    }
  };

  Vars vars(Tape& t, bool trainable) const {
    Vars v;
    for (size_t i = 0; i < conv_w.size(); ++i) {
      v.conv_w.push_back(trainable ? t.leaf(conv_w[i]) : t.constant(conv_w[i]));
      v.conv_b.push_back(trainable ? t.leaf(conv_b[i]) : t.constant(conv_b[i]));
      v.bn_gamma.push_back(trainable ? t.leaf(bn_gamma[i]) : t.constant(bn_gamma[i]));
      v.bn_beta.push_back(trainable ? t.leaf(bn_beta[i]) : t.constant(bn_beta[i]));
    }
    v.head = nn::mlp_vars(t, head, trainable);
    return v;
  }

  // image: 3 x (width*height) planar, values in [0,1]. Returns 1 x n_bits
  // logits. `training` selects batch statistics and updates running stats.
  Var extract_logits(Tape& t, const Vars& v, Var image, int width, int height,
                     bool training) const {
    if (width < cfg.min_input || height < cfg.min_input)
      throw std::invalid_argument("extractor: input " + std::to_string(width) + "x" +
                                  std::to_string(height) + " below minimum " +
                                  std::to_string(cfg.min_input));
    if (t.val(image).rows() != 3 ||
        t.val(image).cols() != static_cast<Eigen::Index>(width) * height)
      throw std::invalid_argument("extractor: bad image shape");
    // Center the input; rendered images live in [0,1].
    Var h = t.add_scalar(t.scale(image, S(2)), S(-1));
    int cur_w = width, cur_h = height;
    for (size_t i = 0; i < v.conv_w.size(); ++i) {
      typename Tape::ConvDims d;
      d.height = cur_h;
      d.width = cur_w;
      d.ksize = 3;
      d.stride = 2;
      d.pad = 1;
      d.reflect_pad = true;  // keeps features of a constant image constant
      h = t.conv2d(h, v.conv_w[i], v.conv_b[i], d);
      h = t.batch_norm(h, v.bn_gamma[i], v.bn_beta[i], bn_state[i],
                       /*use_batch_stats=*/training && cfg.bn_batch_stats,
                       /*update_stats=*/training);
      h = t.relu(h);
      cur_w = d.out_width();
      cur_h = d.out_height();
    }
    Var pooled = t.global_avg_pool(h);  // 1 x C
    return nn::mlp_forward(t, v.head, pooled, nn::Act::relu, nn::Act::none);
  }

  // Plain inference on a planar image.
  ad::Mat<S> extract(const ad::Mat<S>& planar, int width, int height) const {
    Tape t;
    auto v = vars(t, false);
    Var logits = extract_logits(t, v, t.constant(planar), width, height, false);
    return t.val(logits);
  }
};

// Eq. binarization rule: strictly positive logits map to 1, everything
// else (sign 0 or -1, clamped at 0) to 0.
template <typename S>
Message binarize(const ad::Mat<S>& logits) {
  Message m;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(static_cast<double>(logits(i))))
      throw std::invalid_argument("binarize: non-finite logit");
    m.bits.push_back(logits(i) > S(0) ? 1 : 0);
  }
  return m;
}

inline double bit_accuracy(const Message& recovered, const Message& truth) {
  if (recovered.bits.size() != truth.bits.size())
    throw std::invalid_argument("bit_accuracy: length mismatch");
  if (truth.bits.empty()) throw std::invalid_argument("bit_accuracy: empty message");
  int same = 0;
  for (size_t i = 0; i < truth.bits.size(); ++i) same += recovered.bits[i] == truth.bits[i];
  return static_cast<double>(same) / truth.bits.size();
}

}  // namespace nerfmark
