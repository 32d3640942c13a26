// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nerfmark/ad.hpp"

namespace nerfmark {

enum class DistortionKind { identity, gaussian_noise, rotation, scaling, gaussian_blur };

inline const char* to_string(DistortionKind k) {
  switch (k) {
    case DistortionKind::identity: return "identity";
    case DistortionKind::gaussian_noise: return "noise";
    case DistortionKind::rotation: return "rotation";
    case DistortionKind::scaling: return "scaling";
    case DistortionKind::gaussian_blur: return "blur";
  }
  return "?";
}

inline DistortionKind distortion_kind_from_string(const std::string& s) {
  if (s == "identity") return DistortionKind::identity;
  if (s == "noise" || s == "gaussian_noise") return DistortionKind::gaussian_noise;
  if (s == "rotation") return DistortionKind::rotation;
  if (s == "scaling") return DistortionKind::scaling;
  if (s == "blur" || s == "gaussian_blur") return DistortionKind::gaussian_blur;
  throw std::invalid_argument("unknown distortion kind '" + s + "'");
}

// Gaussian blur kernels cover +-3 sigma; sigma = 0 degenerates to a delta.
inline int blur_kernel_size(double sigma) {
  return 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
}

struct DistortionSpec {
  DistortionKind kind = DistortionKind::identity;
  double noise_mean = 0.0;
  double noise_std = 0.0;
  double angle = 0.0;       // radians, about the patch center
  double scale = 1.0;
  double blur_sigma = 0.0;
  int blur_ksize = 1;       // odd, derived from blur_sigma by default

  static DistortionSpec identity() { return DistortionSpec{}; }
  static DistortionSpec noise(double mean, double std) {
    DistortionSpec s;
    s.kind = DistortionKind::gaussian_noise;
    s.noise_mean = mean;
    s.noise_std = std;
    return s;
  }
  static DistortionSpec rotation(double angle) {
    DistortionSpec s;
    s.kind = DistortionKind::rotation;
    s.angle = angle;
    return s;
  }
  static DistortionSpec scaling(double factor) {
    DistortionSpec s;
    s.kind = DistortionKind::scaling;
    s.scale = factor;
    return s;
  }
  static DistortionSpec blur(double sigma) {
    DistortionSpec s;
    s.kind = DistortionKind::gaussian_blur;
    s.blur_sigma = sigma;
    s.blur_ksize = blur_kernel_size(sigma);
    return s;
  }

  void validate() const {
    if (noise_std < 0) throw std::invalid_argument("distortion: noise std must be >= 0");
    if (scale <= 0) throw std::invalid_argument("distortion: scale must be > 0");
    if (blur_sigma < 0) throw std::invalid_argument("distortion: blur sigma must be >= 0");
    if (blur_ksize < 1 || blur_ksize % 2 == 0)
      throw std::invalid_argument("distortion: blur kernel size must be odd and >= 1");
  }

  std::string describe() const {
    char buf[96];
    switch (kind) {
      case DistortionKind::identity: return "identity";
      case DistortionKind::gaussian_noise:
        std::snprintf(buf, sizeof buf, "noise(mean=%.3g,std=%.3g)", noise_mean, noise_std);
        return buf;
      case DistortionKind::rotation:
        std::snprintf(buf, sizeof buf, "rotation(%.4g rad)", angle);
        return buf;
      case DistortionKind::scaling:
        std::snprintf(buf, sizeof buf, "scaling(%.3g)", scale);
        return buf;
      case DistortionKind::gaussian_blur:
        std::snprintf(buf, sizeof buf, "blur(sigma=%.3g)", blur_sigma);
        return buf;
    }
    return "?";
  }
};

namespace detail {

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// Bilinear gather matrix for out(x,y) = in(src(x,y)), zero outside.
template <typename S>
ad::SpMat<S> bilinear_map(int in_w, int in_h, int out_w, int out_h,
                          const std::function<void(double, double, double&, double&)>& src_of) {
  std::vector<Eigen::Triplet<S>> trip;
  trip.reserve(static_cast<size_t>(out_w) * out_h * 4);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx, sy;
      src_of(x + 0.5, y + 0.5, sx, sy);
      const double fx = sx - 0.5, fy = sy - 0.5;
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const double wx = fx - x0, wy = fy - y0;
      const int row = y * out_w + x;
      const double w[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || xs[k] >= in_w || ys[k] < 0 || ys[k] >= in_h) continue;  // zero fill
        if (w[k] == 0.0) continue;
        trip.emplace_back(row, ys[k] * in_w + xs[k], static_cast<S>(w[k]));
      }
    }
  }
  ad::SpMat<S> m(static_cast<Eigen::Index>(out_w) * out_h,
                 static_cast<Eigen::Index>(in_w) * in_h);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

template <typename S>
std::vector<S> gaussian_kernel(double sigma, int ksize) {
  std::vector<S> k(ksize, S(0));
  const int r = ksize / 2;
  if (sigma <= 0) {
    k[r] = S(1);
    return k;
  }
  double total = 0;
  for (int i = -r; i <= r; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[i + r] = static_cast<S>(w);
    total += w;
  }
  for (auto& v : k) v = static_cast<S>(v / total);
  return k;
}

// 1D separable blur with reflect padding, horizontal or vertical.
template <typename S>
ad::SpMat<S> blur_map_1d(int w, int h, const std::vector<S>& kernel, bool horizontal) {
  const int r = static_cast<int>(kernel.size()) / 2;
  std::vector<Eigen::Triplet<S>> trip;
  trip.reserve(static_cast<size_t>(w) * h * kernel.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = y * w + x;
      for (int i = -r; i <= r; ++i) {
        int sx = x, sy = y;
        if (horizontal)
          sx = reflect_index(x + i, w);
        else
          sy = reflect_index(y + i, h);
        trip.emplace_back(row, sy * w + sx, kernel[i + r]);
      }
    }
  }
  ad::SpMat<S> m(static_cast<Eigen::Index>(w) * h, static_cast<Eigen::Index>(w) * h);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace detail

template <typename S>
struct DistortedImage {
  typename ad::Tape<S>::Var image;  // 3 x (out_w * out_h)
  int width = 0, height = 0;
};

// Applies one differentiable distortion to a rendered patch (3 x W*H planar
// values in [0,1]). Sizes change under scaling; everything else is
// size-preserving. Gradients flow to the input pixels through fixed linear
// resampling maps, with clipping subgradients at the [0,1] boundary.
template <typename S>
DistortedImage<S> apply_distortion(ad::Tape<S>& t, typename ad::Tape<S>::Var img, int width,
                                   int height, const DistortionSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  if (t.val(img).rows() != 3 || t.val(img).cols() != static_cast<Eigen::Index>(width) * height)
    throw std::invalid_argument("apply_distortion: bad image shape");
  switch (spec.kind) {
    case DistortionKind::identity:
      return {img, width, height};
    case DistortionKind::gaussian_noise: {
      std::normal_distribution<double> gauss(spec.noise_mean, spec.noise_std);
      ad::Mat<S> noise(3, static_cast<Eigen::Index>(width) * height);
      for (Eigen::Index i = 0; i < noise.size(); ++i)
        noise(i) = static_cast<S>(spec.noise_std > 0 || spec.noise_mean != 0 ? gauss(rng) : 0.0);
      return {t.clamp01(t.add(img, t.constant(std::move(noise)))), width, height};
    }
    case DistortionKind::rotation: {
      const double cx = width * 0.5, cy = height * 0.5;
      const double ca = std::cos(spec.angle), sa = std::sin(spec.angle);
      auto map = std::make_shared<const ad::SpMat<S>>(detail::bilinear_map<S>(
          width, height, width, height, [&](double x, double y, double& sx, double& sy) {
            // inverse rotation about the patch center
            const double dx = x - cx, dy = y - cy;
            sx = cx + ca * dx + sa * dy;
            sy = cy - sa * dx + ca * dy;
          }));
      return {t.image_map(img, map), width, height};
    }
    case DistortionKind::scaling: {
      const int out_w = std::max(1, static_cast<int>(std::lround(width * spec.scale)));
      const int out_h = std::max(1, static_cast<int>(std::lround(height * spec.scale)));
      const double fx = static_cast<double>(width) / out_w;
      const double fy = static_cast<double>(height) / out_h;
      auto map = std::make_shared<const ad::SpMat<S>>(detail::bilinear_map<S>(
          width, height, out_w, out_h, [&](double x, double y, double& sx, double& sy) {
            sx = x * fx;
            sy = y * fy;
          }));
      return {t.clamp01(t.image_map(img, map)), out_w, out_h};
    }
    case DistortionKind::gaussian_blur: {
      auto kernel = detail::gaussian_kernel<S>(spec.blur_sigma, spec.blur_ksize);
      auto hmap = std::make_shared<const ad::SpMat<S>>(
          detail::blur_map_1d<S>(width, height, kernel, true));
      auto vmap = std::make_shared<const ad::SpMat<S>>(
          detail::blur_map_1d<S>(width, height, kernel, false));
      return {t.image_map(t.image_map(img, hmap), vmap), width, height};
    }
  }
  throw std::logic_error("apply_distortion: unreachable");
}

// Training-time distortion sampling ranges (evaluation uses pinned specs).
struct DistortionRanges {
  std::vector<DistortionKind> enabled{DistortionKind::identity, DistortionKind::gaussian_noise,
                                      DistortionKind::rotation, DistortionKind::scaling,
                                      DistortionKind::gaussian_blur};
  double noise_mean = 0.0;
  double noise_std_max = 0.1;
  double rot_max = M_PI / 6;
  double scale_min = 0.75;
  double scale_max = 1.25;
  double blur_sigma_max = 1.0;

  void validate() const {
    if (enabled.empty()) throw std::invalid_argument("distortion ranges: empty enabled set");
    if (noise_std_max < 0 || rot_max < 0 || blur_sigma_max < 0 || scale_min <= 0 ||
        scale_max < scale_min)
      throw std::invalid_argument("distortion ranges: invalid bounds");
  }
};

// One spec drawn uniformly: kind uniform over the enabled set, parameters
// uniform within their ranges.
inline DistortionSpec sample_distortion(std::mt19937_64& rng, const DistortionRanges& ranges) {
  ranges.validate();
  std::uniform_int_distribution<size_t> pick(0, ranges.enabled.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const DistortionKind kind = ranges.enabled[pick(rng)];
  switch (kind) {
    case DistortionKind::identity: return DistortionSpec::identity();
    case DistortionKind::gaussian_noise:
      return DistortionSpec::noise(ranges.noise_mean, u01(rng) * ranges.noise_std_max);
    case DistortionKind::rotation:
      return DistortionSpec::rotation((2.0 * u01(rng) - 1.0) * ranges.rot_max);
    case DistortionKind::scaling:
      return DistortionSpec::scaling(ranges.scale_min +
                                     u01(rng) * (ranges.scale_max - ranges.scale_min));
    case DistortionKind::gaussian_blur:
      return DistortionSpec::blur(u01(rng) * ranges.blur_sigma_max);
  }
  throw std::logic_error("sample_distortion: unreachable");
}

}  // namespace nerfmark
