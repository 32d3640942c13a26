// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>

#include "nerfmark/ad.hpp"

namespace nerfmark {

struct EncodingConfig {
  int n_freqs = 10;
  bool include_input = true;

  int encoded_dim(int input_dim) const { return input_dim * (2 * n_freqs + include_input); }

  void validate() const {
    if (n_freqs < 1) throw std::invalid_argument("encoding: n_freqs must be >= 1");
  }
};

// Frequency encoding: per input component p, [p?] then
// sin(2^k pi p), cos(2^k pi p) for k = 0..L-1. Inputs are row-batched
// (N x D); the output interleaves per component so the layout is
// [raw..., sin/cos pairs per frequency per component].
template <typename S>
ad::Mat<S> encode_batch(const ad::Mat<S>& p, const EncodingConfig& cfg) {
  cfg.validate();
  if (!p.allFinite()) throw std::invalid_argument("encoding: non-finite input");
  const Eigen::Index n = p.rows(), d = p.cols();
  ad::Mat<S> out(n, cfg.encoded_dim(static_cast<int>(d)));
  Eigen::Index col = 0;
  if (cfg.include_input) {
    out.leftCols(d) = p;
    col = d;
  }
  const S pi = static_cast<S>(M_PI);
  for (int k = 0; k < cfg.n_freqs; ++k) {
    const S freq = std::ldexp(S(1), k) * pi;  // 2^k * pi
    for (Eigen::Index c = 0; c < d; ++c) {
      out.col(col++) = (p.col(c) * freq).array().sin();
      out.col(col++) = (p.col(c) * freq).array().cos();
    }
  }
  return out;
}

}  // namespace nerfmark
