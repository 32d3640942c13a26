// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace nerfmark {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("metrics: image shapes differ");
  if (a.width < 1 || a.height < 1) throw std::invalid_argument("metrics: empty image");
}

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow);
  const int r = kWindow / 2;
  double total = 0;
  for (int i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-(i * i) / (2.0 * kSigma * kSigma));
    total += w[i + r];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable valid-region filter; output is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, int& ow, int& oh) {
  static const std::vector<double> win = gaussian_window();
  const int r = kWindow / 2;
  ow = w - 2 * r;
  oh = h - 2 * r;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += win[k] * img[static_cast<size_t>(y) * w + x + k];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += win[k] * tmp[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int w, int h) {
  const size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  int ow = 0, oh = 0;
  auto mu_a = filter_valid(a, w, h, ow, oh);
  auto mu_b = filter_valid(b, w, h, ow, oh);
  auto m_aa = filter_valid(aa, w, h, ow, oh);
  auto m_bb = filter_valid(bb, w, h, ow, oh);
  auto m_ab = filter_valid(ab, w, h, ow, oh);
  double total = 0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

double psnr(const ImageRGB& a, const ImageRGB& b) {
  check_pair(a, b);
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageRGB& a, const ImageRGB& b) {
  check_pair(a, b);
  if (a.width < kWindow || a.height < kWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ca(a.pixel_count()), cb(a.pixel_count());
    for (size_t p = 0; p < a.pixel_count(); ++p) {
      ca[p] = a.data[p * 3 + c];
      cb[p] = b.data[p * 3 + c];
    }
    total += ssim_channel(ca, cb, a.width, a.height);
  }
  return total / 3.0;
}

}  // namespace nerfmark
