// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <stdexcept>

#include "nerfmark/ad.hpp"
#include "nerfmark/nn.hpp"
#include "nerfmark/watermark_field.hpp"

namespace nerfmark {

// Fixed (non-trained) feature map for the perceptual term of the content
// loss. Implementations must be deterministic.
template <typename S>
class Perceptual {
 public:
  using Var = typename ad::Tape<S>::Var;
  virtual ~Perceptual() = default;
  virtual Var features(ad::Tape<S>& t, Var image, int width, int height) const = 0;
};

template <typename S>
class IdentityPerceptual final : public Perceptual<S> {
 public:
  using Var = typename ad::Tape<S>::Var;
  Var features(ad::Tape<S>&, Var image, int, int) const override { return image; }
};

// Random-feature proxy: a frozen, seed-initialized stack of stride-2
// convolutions. Stands in where pretrained perceptual weights are not
// available; any other feature network can be plugged in through the
// Perceptual interface.
template <typename S>
class RandomConvPerceptual final : public Perceptual<S> {
 public:
  using Var = typename ad::Tape<S>::Var;

  explicit RandomConvPerceptual(uint64_t seed, int layers = 3, int channels = 8) {
    auto rng = make_rng(seed, Stream::param_init, 0xfeedbeef);
    int cin = 3;
    for (int i = 0; i < layers; ++i) {
      w_.push_back(nn::glorot_uniform<S>(channels, cin * 9, rng));
      b_.push_back(ad::Mat<S>::Zero(channels, 1));
      cin = channels;
    }
  }

  Var features(ad::Tape<S>& t, Var image, int width, int height) const override {
    Var h = image;
    int cw = width, ch = height;
    for (size_t i = 0; i < w_.size(); ++i) {
      if (cw < 3 || ch < 3) break;
      typename ad::Tape<S>::ConvDims d;
      d.width = cw;
      d.height = ch;
      d.ksize = 3;
      d.stride = 2;
      d.pad = 1;
      h = t.relu(t.conv2d(h, t.constant(w_[i]), t.constant(b_[i]), d));
      cw = d.out_width();
      ch = d.out_height();
    }
    return h;
  }

 private:
  std::vector<ad::Mat<S>> w_;
  std::vector<ad::Mat<S>> b_;
};

// Mean over rays of the squared L2 color error: (1/N_r) sum ||C_hat - C||^2.
template <typename S>
typename ad::Tape<S>::Var reconstruction_loss(ad::Tape<S>& t, typename ad::Tape<S>::Var predicted,
                                              typename ad::Tape<S>::Var observed) {
  const auto& p = t.val(predicted);
  const auto& o = t.val(observed);
  if (p.rows() != o.rows() || p.cols() != o.cols())
    throw std::invalid_argument("reconstruction_loss: shape mismatch");
  const Eigen::Index n_rays = p.rows() == 3 ? p.cols() : p.rows();
  if (p.size() == 0 || n_rays == 0) throw std::invalid_argument("reconstruction_loss: empty batch");
  auto sq = t.square(t.sub(predicted, observed));
  return t.scale(t.sum(sq), S(1) / static_cast<S>(n_rays));
}

// Pixel MSE plus lambda-weighted perceptual feature MSE between the
// watermarked patch and the base patch rendered from the same coordinates.
template <typename S>
typename ad::Tape<S>::Var content_loss(ad::Tape<S>& t, typename ad::Tape<S>::Var wm_patch,
                                       typename ad::Tape<S>::Var base_patch, int width, int height,
                                       const Perceptual<S>* psi, S lambda) {
  const auto& a = t.val(wm_patch);
  const auto& b = t.val(base_patch);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("content_loss: shape mismatch");
  auto loss = t.mean(t.square(t.sub(wm_patch, base_patch)));
  if (psi != nullptr && lambda != S(0)) {
    auto fa = psi->features(t, wm_patch, width, height);
    auto fb = psi->features(t, base_patch, width, height);
    loss = t.add(loss, t.scale(t.mean(t.square(t.sub(fa, fb))), lambda));
  }
  return loss;
}

// Binary cross-entropy between logits and the ground-truth message,
// mean over bits (numerically stabilized inside the tape op).
template <typename S>
typename ad::Tape<S>::Var message_loss(ad::Tape<S>& t, typename ad::Tape<S>::Var logits,
                                       const Message& m) {
  if (t.val(logits).size() != m.length())
    throw std::invalid_argument("message_loss: length mismatch");
  return t.bce_with_logits(logits, m.template to_row<S>());
}

template <typename S>
typename ad::Tape<S>::Var total_loss(ad::Tape<S>& t, typename ad::Tape<S>::Var content,
                                     typename ad::Tape<S>::Var message, S gamma1, S gamma2) {
  return t.add(t.scale(content, gamma1), t.scale(message, gamma2));
}

}  // namespace nerfmark
