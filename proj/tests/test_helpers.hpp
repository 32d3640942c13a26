// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "nerfmark/ad.hpp"

namespace nerfmark::test {

// Central finite-difference gradient of a scalar function of one matrix,
// used as the independent oracle for every analytic gradient in the suite.
inline ad::Mat<double> fd_gradient(const std::function<double(const ad::Mat<double>&)>& f,
                                   ad::Mat<double> x, double h) {
  ad::Mat<double> g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + h;
    const double fp = f(x);
    x(i) = orig - h;
    const double fm = f(x);
    x(i) = orig;
    g(i) = (fp - fm) / (2 * h);
  }
  return g;
}

// Relative error with a floor tied to the gradient's overall scale, so
// components that nearly cancel do not inflate the score.
inline double max_rel_error(const ad::Mat<double>& a, const ad::Mat<double>& b,
                            double scale_floor_frac = 1e-3) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  const double floor = scale * scale_floor_frac;
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

inline ad::Mat<double> random_mat(int rows, int cols, std::mt19937_64& rng, double lo = -1,
                                  double hi = 1) {
  std::uniform_real_distribution<double> dist(lo, hi);
  ad::Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

// Critical value of the chi-square distribution via the Wilson-Hilferty
// approximation; good to a few percent for df >= 10, which is all the
// uniformity tests need.
inline double chi2_critical(int df, double z_alpha) {
  const double t = 2.0 / (9.0 * df);
  const double c = 1.0 - t + z_alpha * std::sqrt(t);
  return df * c * c * c;
}

}  // namespace nerfmark::test
