// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "doctest.h"
#include "nerfmark/extractor.hpp"
#include "test_helpers.hpp"

using namespace nerfmark;
using Tape = ad::Tape<double>;
using Mat = ad::Mat<double>;
namespace nt = nerfmark::test;

namespace {

ExtractorConfig tiny_cfg() {
  ExtractorConfig cfg;
  cfg.n_bits = 4;
  cfg.widths = {4, 8};
  cfg.head_hidden = 8;
  cfg.min_input = 8;
  return cfg;
}

}  // namespace

TEST_CASE("extractor: constant image gives the same logits at doubled size") {
  std::mt19937_64 rng(3);
  MessageExtractor<double> ex = MessageExtractor<double>::create(tiny_cfg(), rng);
  Mat small = Mat::Constant(3, 8 * 8, 0.0);
  Mat big = Mat::Constant(3, 16 * 16, 0.0);
  for (int c = 0; c < 3; ++c) {
    small.row(c).setConstant(0.2 + 0.2 * c);
    big.row(c).setConstant(0.2 + 0.2 * c);
  }
  Mat l_small = ex.extract(small, 8, 8);
  Mat l_big = ex.extract(big, 16, 16);  // exact 2x nearest-neighbor upsample
  CHECK(l_small.cols() == 4);
  CHECK((l_small - l_big).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("extractor: repeated extraction is deterministic") {
  std::mt19937_64 rng(5);
  MessageExtractor<double> ex = MessageExtractor<double>::create(tiny_cfg(), rng);
  Mat img = nt::random_mat(3, 12 * 10, rng, 0, 1);
  Mat a = ex.extract(img, 12, 10);
  Mat b = ex.extract(img, 12, 10);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extractor: single-block toy network matches a hand-rolled oracle") {
  std::mt19937_64 rng(7);
  ExtractorConfig cfg;
  cfg.n_bits = 4;
  cfg.widths = {2};
  cfg.head_hidden = 3;
  cfg.min_input = 4;
  MessageExtractor<double> ex = MessageExtractor<double>::create(cfg, rng);
  const int w = 6, h = 6;
  Mat img = nt::random_mat(3, w * h, rng, 0, 1);
  Mat logits = ex.extract(img, w, h);

  // Oracle: direct conv (stride 2, reflect pad), eval-mode batch norm
  // (fresh running stats: mean 0, var 1), relu, mean pool, linear head.
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  const int ow = (w + 2 - 3) / 2 + 1, oh = (h + 2 - 3) / 2 + 1;
  Mat feat(2, ow * oh);
  for (int oc = 0; oc < 2; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = ex.conv_b[0](oc, 0);
        for (int ic = 0; ic < 3; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = reflect(oy * 2 + ky - 1, h), ix = reflect(ox * 2 + kx - 1, w);
              acc += ex.conv_w[0](oc, ic * 9 + ky * 3 + kx) * (2 * img(ic, iy * w + ix) - 1);
            }
        const double eps = 1e-5;
        const double bn = ex.bn_gamma[0](oc, 0) * acc / std::sqrt(1.0 + eps) +
                          ex.bn_beta[0](oc, 0);
        feat(oc, oy * ow + ox) = std::max(0.0, bn);
      }
  Mat pooled = feat.rowwise().mean().transpose();  // 1 x 2
  Mat hh = ((pooled * ex.head.w[0]).rowwise() + ex.head.b[0].row(0)).cwiseMax(0.0);
  Mat oracle = (hh * ex.head.w[1]).rowwise() + ex.head.b[1].row(0);
  CHECK((logits - oracle).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("extractor: inputs below the minimum size are rejected") {
  std::mt19937_64 rng(9);
  MessageExtractor<double> ex = MessageExtractor<double>::create(tiny_cfg(), rng);
  Mat img = Mat::Constant(3, 4 * 4, 0.5);
  CHECK_THROWS_AS(ex.extract(img, 4, 4), std::invalid_argument);
}

TEST_CASE("extractor: input-pixel gradient matches finite differences on 8x8") {
  std::mt19937_64 rng(11);
  MessageExtractor<double> ex = MessageExtractor<double>::create(tiny_cfg(), rng);
  Mat img = nt::random_mat(3, 8 * 8, rng, 0.1, 0.9);
  std::mt19937_64 probe_rng(13);
  const Mat probe = nt::random_mat(1, 4, probe_rng);

  Tape t;
  auto vars = ex.vars(t, false);
  auto x = t.leaf(img);
  auto logits = ex.extract_logits(t, vars, x, 8, 8, /*training=*/false);
  auto loss = t.sum(t.mul(logits, t.constant(probe)));
  t.backward(loss);
  Mat analytic = t.grad(x);
  Mat fd = nt::fd_gradient(
      [&](const Mat& xv) { return (ex.extract(xv, 8, 8).cwiseProduct(probe)).sum(); }, img, 1e-5);
  CHECK(nt::max_rel_error(analytic, fd) < 1e-2);
}

TEST_CASE("extractor: parameter gradients flow (training mode)") {
  std::mt19937_64 rng(15);
  MessageExtractor<double> ex = MessageExtractor<double>::create(tiny_cfg(), rng);
  Mat img = nt::random_mat(3, 10 * 10, rng, 0, 1);
  Tape t;
  auto vars = ex.vars(t, true);
  auto logits = ex.extract_logits(t, vars, t.constant(img), 10, 10, true);
  Mat target(1, 4);
  target << 1, 0, 1, 1;
  auto loss = t.bce_with_logits(logits, target);
  t.backward(loss);
  std::vector<Tape::Var> leaves;
  vars.flatten(leaves);
  for (auto v : leaves) CHECK(t.grad(v).cwiseAbs().sum() > 0.0);
}

TEST_CASE("binarize: sign rule with zero mapping to 0") {
  Mat a(1, 2);
  a << 0.7, -0.3;
  CHECK(binarize(a).to_bitstring() == "10");
  Mat z(1, 4);
  z << 0.0, -0.0, 1e-30, -1e-30;
  CHECK(binarize(z).bits[0] == 0);
  CHECK(binarize(z).bits[1] == 0);
  CHECK(binarize(z).bits[2] == 1);
  CHECK(binarize(z).bits[3] == 0);
}

TEST_CASE("binarize: agrees with (logit > 0) elementwise on a random 48-vector") {
  std::mt19937_64 rng(17);
  Mat logits = nt::random_mat(1, 48, rng, -2, 2);
  Message m = binarize(logits);
  for (int i = 0; i < 48; ++i) CHECK(m.bits[i] == (logits(0, i) > 0 ? 1 : 0));
}

TEST_CASE("binarize: idempotent through the +-1 logit embedding") {
  std::mt19937_64 rng(19);
  Mat logits = nt::random_mat(1, 16, rng, -3, 3);
  Message m1 = binarize(logits);
  Mat as_logits(1, 16);
  for (int i = 0; i < 16; ++i) as_logits(0, i) = m1.bits[i] ? 1.0 : -1.0;
  CHECK(binarize(as_logits) == m1);
}

TEST_CASE("binarize: non-finite logits are rejected") {
  Mat bad(1, 1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(binarize(bad), std::invalid_argument);
}

TEST_CASE("bit_accuracy: identity, complement, mismatch") {
  Message m = Message::from_bitstring("0110");
  CHECK(bit_accuracy(m, m) == 1.0);
  Message c = Message::from_bitstring("1001");
  CHECK(bit_accuracy(c, m) == 0.0);
  Message longer = Message::from_bitstring("01100110");
  CHECK_THROWS_AS(bit_accuracy(longer, m), std::invalid_argument);
}

TEST_CASE("bit_accuracy: random guessing sits at 0.5 +- 0.015 over 10^4 pairs") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> bit(0, 1);
  double total = 0;
  const int pairs = 10000;
  for (int i = 0; i < pairs; ++i) {
    Message a, b;
    for (int k = 0; k < 16; ++k) {
      a.bits.push_back(static_cast<uint8_t>(bit(rng)));
      b.bits.push_back(static_cast<uint8_t>(bit(rng)));
    }
    total += bit_accuracy(a, b);
  }
  CHECK(std::abs(total / pairs - 0.5) < 0.015);
}
