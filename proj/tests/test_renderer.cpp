// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "doctest.h"
#include "nerfmark/renderer.hpp"
#include "test_helpers.hpp"

using namespace nerfmark;
using Tape = ad::Tape<double>;
using Mat = ad::Mat<double>;
using Vec3 = Eigen::Vector3d;
namespace nt = nerfmark::test;

namespace {

CameraModel test_camera(int size = 64) {
  return CameraModel::look_at(Vec3(4, 0, 0), Vec3::Zero(), Vec3(0, 0, 1), 70.0, size, size);
}

BaseFieldConfig tiny_cfg() {
  BaseFieldConfig cfg;
  cfg.layers = 2;
  cfg.width = 16;
  cfg.z_width = 16;
  cfg.color_hidden = 16;
  cfg.enc_pos = EncodingConfig{2, true};
  cfg.enc_dir = EncodingConfig{2, true};
  return cfg;
}

}  // namespace

TEST_CASE("rays: principal-point pixel looks along the camera forward axis") {
  CameraModel cam = test_camera();
  cam.cx = 10.5;  // center of pixel (10, 20)
  cam.cy = 20.5;
  auto rays = generate_rays(cam, {{10, 20}}, 2.0, 6.0);
  CHECK((rays[0].direction - cam.forward_axis()).norm() < 1e-12);
  CHECK((rays[0].origin - cam.translation).norm() == 0.0);
}

TEST_CASE("rays: unit norm over a full 64x64 sweep") {
  CameraModel cam = test_camera(64);
  std::vector<PixelCoord> coords;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) coords.push_back({x, y});
  auto rays = generate_rays(cam, coords, 2.0, 6.0);
  for (const auto& r : rays) CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
}

TEST_CASE("rays: corner pixel matches the closed-form pinhole direction") {
  CameraModel cam = test_camera(64);
  auto rays = generate_rays(cam, {{0, 0}}, 2.0, 6.0);
  // Analytic pinhole oracle in camera space, rotated to world.
  const Eigen::Vector3d d_cam((0.5 - cam.cx) / cam.focal, -(0.5 - cam.cy) / cam.focal, -1.0);
  const Eigen::Vector3d expect = (cam.rotation * d_cam).normalized();
  CHECK((rays[0].direction - expect).norm() < 1e-12);
}

TEST_CASE("rays: out-of-bounds pixel is rejected") {
  CameraModel cam = test_camera(8);
  CHECK_THROWS_AS(generate_rays(cam, {{8, 0}}, 2.0, 6.0), std::invalid_argument);
}

TEST_CASE("patch: offset set for K=2 matches the coordinate definition") {
  PatchSpec p{5, 7, 2};
  auto coords = p.coords();
  REQUIRE(coords.size() == 4);
  // offsets {-1, 0} x {-1, 0} around (5,7), row-major
  CHECK(coords[0].x == 4);
  CHECK(coords[0].y == 6);
  CHECK(coords[1].x == 5);
  CHECK(coords[1].y == 6);
  CHECK(coords[2].x == 4);
  CHECK(coords[2].y == 7);
  CHECK(coords[3].x == 5);
  CHECK(coords[3].y == 7);
}

TEST_CASE("patch: K=150 produces exactly 22500 coordinates") {
  std::mt19937_64 rng(3);
  PatchSpec p = sample_patch_spec(rng, 256, 256, 150);
  auto coords = p.coords();
  CHECK(coords.size() == 22500);
  for (const auto& c : coords) {
    CHECK(c.x >= 0);
    CHECK(c.y >= 0);
    CHECK(c.x < 256);
    CHECK(c.y < 256);
  }
}

TEST_CASE("patch: centers are uniform over the valid region (chi-square)") {
  std::mt19937_64 rng(5);
  const int w = 16, h = 16, k = 4;
  const int positions = w - k + 1;  // 13 per axis
  std::vector<int> counts(positions * positions, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    PatchSpec p = sample_patch_spec(rng, w, h, k);
    counts[(p.cy - k / 2) * positions + (p.cx - k / 2)] += 1;
  }
  const double expected = static_cast<double>(draws) / (positions * positions);
  double stat = 0;
  for (int c : counts) stat += (c - expected) * (c - expected) / expected;
  // p > 0.01 <=> statistic below the 99% critical value.
  CHECK(stat < nt::chi2_critical(positions * positions - 1, 2.3263));
}

TEST_CASE("patch: oversized or odd patch sizes are rejected") {
  std::mt19937_64 rng(7);
  CHECK_THROWS_AS(sample_patch_spec(rng, 16, 16, 32), std::invalid_argument);
  CHECK_THROWS_AS(sample_patch_spec(rng, 16, 16, 3), std::invalid_argument);
}

TEST_CASE("stratified: midpoints without jitter, strict monotonicity with it") {
  std::mt19937_64 rng(11);
  auto mid = stratified_ts(2.0, 6.0, 4, rng, false);
  CHECK(mid[0] == doctest::Approx(2.5));
  CHECK(mid[1] == doctest::Approx(3.5));
  CHECK(mid[2] == doctest::Approx(4.5));
  CHECK(mid[3] == doctest::Approx(5.5));

  auto ts = stratified_ts(2.0, 6.0, 32, rng, true);
  CHECK(ts.size() == 32);
  for (size_t i = 0; i + 1 < ts.size(); ++i) CHECK(ts[i] < ts[i + 1]);
  CHECK(ts.front() >= 2.0);
  CHECK(ts.back() <= 6.0);
  CHECK_THROWS_AS(stratified_ts(2.0, 6.0, 0, rng, true), std::invalid_argument);
}

TEST_CASE("stratified: each bin holds exactly one sample") {
  std::mt19937_64 rng(13);
  const int n = 16;
  for (int trial = 0; trial < 1000; ++trial) {
    auto ts = stratified_ts(2.0, 6.0, n, rng, true);
    std::vector<int> occupancy(n, 0);
    for (double t : ts) {
      int bin = static_cast<int>((t - 2.0) / (4.0 / n));
      bin = std::clamp(bin, 0, n - 1);
      occupancy[bin] += 1;
    }
    for (int o : occupancy) CHECK(o == 1);
  }
}

TEST_CASE("importance: uniform weights give a uniform distribution (KS test)") {
  std::mt19937_64 rng(17);
  std::vector<double> edges{0, 1, 2, 3, 4};
  std::vector<double> weights{1, 1, 1, 1};
  const int n = 10000;
  auto samples = sample_piecewise_pdf(edges, weights, n, rng);
  std::sort(samples.begin(), samples.end());
  double d = 0;
  for (int i = 0; i < n; ++i) {
    const double cdf = samples[i] / 4.0;
    d = std::max(d, std::abs(cdf - static_cast<double>(i + 1) / n));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
  }
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(n)));  // alpha = 0.01
}

TEST_CASE("importance: a single spiked weight confines samples to its bin") {
  std::mt19937_64 rng(19);
  std::vector<double> edges{0, 1, 2, 3, 4};
  std::vector<double> weights{0, 0, 5, 0};
  auto samples = sample_piecewise_pdf(edges, weights, 1000, rng);
  for (double s : samples) {
    CHECK(s >= 2.0);
    CHECK(s <= 3.0);
  }
}

TEST_CASE("importance: empirical CDF matches the analytic CDF of an 8-bin pdf") {
  std::mt19937_64 rng(23);
  std::vector<double> edges{0, 0.5, 1.2, 1.7, 2.0, 2.8, 3.3, 3.9, 5.0};
  std::vector<double> weights{0.3, 1.4, 0.1, 2.0, 0.8, 0.05, 1.1, 0.6};
  const int n = 10000;
  auto samples = sample_piecewise_pdf(edges, weights, n, rng);

  // Analytic CDF oracle.
  double total = 0;
  for (double w : weights) total += w;
  auto cdf = [&](double x) {
    double acc = 0;
    for (size_t b = 0; b < weights.size(); ++b) {
      if (x >= edges[b + 1])
        acc += weights[b];
      else if (x > edges[b]) {
        acc += weights[b] * (x - edges[b]) / (edges[b + 1] - edges[b]);
        break;
      } else {
        break;
      }
    }
    return acc / total;
  };

  std::sort(samples.begin(), samples.end());
  double sup = 0;
  for (int i = 0; i < n; ++i) {
    sup = std::max(sup, std::abs(cdf(samples[i]) - static_cast<double>(i + 1) / n));
    sup = std::max(sup, std::abs(cdf(samples[i]) - static_cast<double>(i) / n));
  }
  CHECK(sup < 0.02);
}

TEST_CASE("importance: merge keeps order; zero weights fall back; negatives rejected") {
  std::mt19937_64 rng(29);
  auto coarse = stratified_ts(2.0, 6.0, 8, rng, true);
  std::vector<double> weights(8, 0.5);
  auto merged = importance_merge_ts(coarse, weights, 2.0, 6.0, 8, rng);
  CHECK(merged.size() == 16);
  for (size_t i = 0; i + 1 < merged.size(); ++i) CHECK(merged[i] <= merged[i + 1]);

  std::vector<double> zeros(8, 0.0);
  auto fallback = importance_merge_ts(coarse, zeros, 2.0, 6.0, 8, rng);
  CHECK(fallback.size() == 16);

  std::vector<double> negative(8, 0.5);
  negative[3] = -0.1;
  CHECK_THROWS_AS(importance_merge_ts(coarse, negative, 2.0, 6.0, 8, rng),
                  std::invalid_argument);
}

TEST_CASE("randomize: beta=0 is the identity") {
  std::mt19937_64 rng(31);
  auto ts = stratified_ts(2.0, 6.0, 16, rng, true);
  auto out = randomize_ts(ts, 0.0, 2.0, 6.0, rng);
  CHECK(out == ts);
}

TEST_CASE("randomize: output is strictly monotone and in bounds") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 1000; ++trial) {
    auto ts = stratified_ts(2.0, 6.0, 16, rng, true);
    auto out = randomize_ts(ts, 0.8, 2.0, 6.0, rng);
    CHECK(out.size() == ts.size());
    CHECK(out.front() >= 2.0);
    CHECK(out.back() <= 6.0);
    for (size_t i = 0; i + 1 < out.size(); ++i) CHECK(out[i] < out[i + 1]);
  }
}

TEST_CASE("randomize: shift standard deviation matches beta (moment estimator)") {
  std::mt19937_64 rng(41);
  const double beta = 0.37;
  // Single-sample sequences on a wide extent: no sorting interference and
  // clamping never binds, so shifted - original is the raw Gaussian draw.
  double sum = 0, sum2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    std::vector<double> ts{500.0};
    auto out = randomize_ts(ts, beta, 0.0, 1000.0, rng);
    const double d = out[0] - 500.0;
    sum += d;
    sum2 += d * d;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  CHECK(std::sqrt(var) == doctest::Approx(beta).epsilon(0.05));
}

TEST_CASE("composite: zero opacity gives black, ln2 opacity gives half color") {
  auto res0 = composite_ray({1.0, 1.0}, {0.0, 0.0},
                            {Vec3(0.5, 0.2, 0.9), Vec3(0.1, 0.1, 0.1)});
  CHECK(res0.rgb.norm() == doctest::Approx(0.0));

  const double sigma = std::log(2.0);
  auto res1 = composite_ray({1.0}, {sigma}, {Vec3(0.8, 0.4, 0.2)});
  CHECK(res1.rgb[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(res1.rgb[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(res1.rgb[2] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("composite: matches a fine Riemann quadrature of the volume integral") {
  // Piecewise-constant sigma and color over 5 segments; the quadrature
  // oracle integrates T(t) sigma(t) c(t) dt on a fine grid analytically
  // independent of the compositing code.
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> us(0.0, 2.0), uc(0.0, 1.0), ud(0.1, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> deltas(5), sigmas(5);
    std::vector<Vec3> colors(5);
    for (int i = 0; i < 5; ++i) {
      deltas[i] = ud(rng);
      sigmas[i] = us(rng);
      colors[i] = Vec3(uc(rng), uc(rng), uc(rng));
    }
    auto res = composite_ray(deltas, sigmas, colors);

    // Midpoint quadrature with substeps aligned to the segment boundaries,
    // so the piecewise-constant fields are exact within each substep.
    Vec3 integral = Vec3::Zero();
    double optical_depth = 0;
    for (int seg = 0; seg < 5; ++seg) {
      const int substeps = 4000;
      const double h = deltas[seg] / substeps;
      for (int i = 0; i < substeps; ++i) {
        const double depth_mid = optical_depth + sigmas[seg] * h * (i + 0.5);
        integral += std::exp(-depth_mid) * sigmas[seg] * colors[seg] * h;
      }
      optical_depth += sigmas[seg] * deltas[seg];
    }
    CHECK((res.rgb - integral).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("composite: transmittance non-increasing, weights sub-probability (10^4 rays)") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> us(0.0, 3.0), uc(0.0, 1.0), ud(0.01, 0.5);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    std::vector<double> deltas(n), sigmas(n);
    std::vector<Vec3> colors(n, Vec3(0.5, 0.5, 0.5));
    for (int i = 0; i < n; ++i) {
      deltas[i] = ud(rng);
      sigmas[i] = us(rng);
    }
    auto res = composite_ray(deltas, sigmas, colors);
    CHECK(res.transmittance[0] == doctest::Approx(1.0));
    double wsum = 0;
    for (int i = 0; i < n; ++i) {
      if (i + 1 < n) CHECK(res.transmittance[i + 1] <= res.transmittance[i] + 1e-15);
      wsum += res.weights[i];
    }
    CHECK(wsum <= 1.0 + 1e-12);
  }
}

TEST_CASE("composite: shuffling samples and re-sorting reproduces the output exactly") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> us(0.0, 2.0), uc(0.0, 1.0);
  auto ts = stratified_ts(2.0, 6.0, 8, rng, true);
  std::vector<double> sigmas(8);
  std::vector<Vec3> colors(8);
  for (int i = 0; i < 8; ++i) {
    sigmas[i] = us(rng);
    colors[i] = Vec3(uc(rng), uc(rng), uc(rng));
  }
  auto ref = composite_ray(deltas_from_ts(ts, 6.0), sigmas, colors);

  std::vector<int> perm{3, 1, 7, 0, 6, 2, 5, 4};
  std::vector<std::pair<double, int>> keyed;
  for (int i = 0; i < 8; ++i) keyed.emplace_back(ts[perm[i]], perm[i]);
  std::sort(keyed.begin(), keyed.end());
  std::vector<double> ts2(8), sigmas2(8);
  std::vector<Vec3> colors2(8);
  for (int i = 0; i < 8; ++i) {
    ts2[i] = keyed[i].first;
    sigmas2[i] = sigmas[keyed[i].second];
    colors2[i] = colors[keyed[i].second];
  }
  auto res = composite_ray(deltas_from_ts(ts2, 6.0), sigmas2, colors2);
  CHECK((res.rgb - ref.rgb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("composite: NaN and negative inputs are rejected") {
  CHECK_THROWS_AS(
      composite_ray({1.0}, {std::numeric_limits<double>::quiet_NaN()}, {Vec3(0.5, 0.5, 0.5)}),
      std::invalid_argument);
  CHECK_THROWS_AS(composite_ray({1.0}, {-0.5}, {Vec3(0.5, 0.5, 0.5)}), std::invalid_argument);
}

TEST_CASE("composite_batch agrees with the single-ray path") {
  std::mt19937_64 rng(59);
  const int rays = 3, sn = 6;
  Mat deltas(sn, rays), sigma_flat(sn * rays, 1), colors(sn * rays, 3);
  std::uniform_real_distribution<double> us(0.0, 2.0), uc(0.0, 1.0), ud(0.05, 0.4);
  for (int r = 0; r < rays; ++r)
    for (int s = 0; s < sn; ++s) {
      deltas(s, r) = ud(rng);
      sigma_flat(r * sn + s, 0) = us(rng);
      for (int c = 0; c < 3; ++c) colors(r * sn + s, c) = uc(rng);
    }
  Tape t;
  auto img = composite_batch<double>(t, t.constant(sigma_flat), t.constant(colors), deltas);
  for (int r = 0; r < rays; ++r) {
    std::vector<double> d(sn), s(sn);
    std::vector<Vec3> c(sn);
    for (int i = 0; i < sn; ++i) {
      d[i] = deltas(i, r);
      s[i] = sigma_flat(r * sn + i, 0);
      c[i] = colors.row(r * sn + i).transpose();
    }
    auto ref = composite_ray(d, s, c);
    for (int ch = 0; ch < 3; ++ch)
      CHECK(t.val(img)(ch, r) == doctest::Approx(ref.rgb[ch]).epsilon(1e-12));
  }
}

TEST_CASE("render: near-zero density yields an all-black patch") {
  std::mt19937_64 rng(61);
  BaseField<double> coarse = BaseField<double>::create(tiny_cfg(), rng);
  BaseField<double> fine = BaseField<double>::create(tiny_cfg(), rng);
  // Force sigma ~ 0 through a very negative density bias.
  coarse.sigma_b(0, 0) = -60.0;
  fine.sigma_b(0, 0) = -60.0;

  Tape t;
  auto cv = coarse.vars(t, false);
  auto fv = fine.vars(t, false);
  CameraModel cam = test_camera(16);
  PatchSpec patch{8, 8, 4};
  auto rays = RayBatch<double>::from_camera(cam, patch.coords(), 2.0, 6.0);
  RenderRequest req;
  req.preset.n_asp = 8;
  req.preset.n_isp = 8;
  req.seed = 1;
  auto out = render_rays<double>(t, coarse, cv, fine, fv, nullptr, nullptr, {}, rays, req);
  CHECK(t.val(out.base).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("render: message present at zero-init equals message absent exactly") {
  std::mt19937_64 rng(67);
  BaseField<double> coarse = BaseField<double>::create(tiny_cfg(), rng);
  BaseField<double> fine = BaseField<double>::create(tiny_cfg(), rng);
  WatermarkFieldConfig wm_cfg;
  wm_cfg.n_bits = 4;
  wm_cfg.nc = 8;
  wm_cfg.e_hidden = 8;
  wm_cfg.g_hidden = 8;
  wm_cfg.enc_pos = EncodingConfig{2, true};
  wm_cfg.enc_dir = EncodingConfig{2, true};
  WatermarkField<double> wm = WatermarkField<double>::create(wm_cfg, rng);

  Tape t;
  auto cv = coarse.vars(t, false);
  auto fv = fine.vars(t, false);
  auto wv = wm.vars(t, false);
  CameraModel cam = test_camera(16);
  PatchSpec patch{8, 8, 4};
  auto rays = RayBatch<double>::from_camera(cam, patch.coords(), 2.0, 6.0);
  RenderRequest req;
  req.preset.n_asp = 8;
  req.preset.n_isp = 4;
  req.seed = 9;
  Message msg = Message::from_bitstring("1011");
  auto msg_block = wm.fusion_message_block(t, wv, msg);
  auto out = render_rays<double>(t, coarse, cv, fine, fv, &wm, &wv, msg_block, rays, req);
  CHECK((t.val(out.wm) - t.val(out.base)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("render: pipeline gradient through the watermarked patch matches finite differences") {
  // 2x2 patch, 4 samples per ray, gradient w.r.t. one watermark weight
  // block checked against central differences at 1e-3.
  std::mt19937_64 rng(71);
  BaseField<double> coarse = BaseField<double>::create(tiny_cfg(), rng);
  BaseField<double> fine = BaseField<double>::create(tiny_cfg(), rng);
  WatermarkFieldConfig wm_cfg;
  wm_cfg.n_bits = 4;
  wm_cfg.nc = 8;
  wm_cfg.nm = 8;
  wm_cfg.e_hidden = 8;
  wm_cfg.g_hidden = 8;
  wm_cfg.enc_pos = EncodingConfig{2, true};
  wm_cfg.enc_dir = EncodingConfig{2, true};
  WatermarkField<double> wm = WatermarkField<double>::create(wm_cfg, rng);
  wm.fusion_tail.w.back() = nt::random_mat(8, 3, rng);

  CameraModel cam = test_camera(16);
  PatchSpec patch{8, 8, 2};
  const Message msg = Message::from_bitstring("0110");
  const Mat probe = nt::random_mat(3, 4, rng);

  auto render_loss = [&](const WatermarkField<double>& field, Tape& t, bool trainable,
                         typename WatermarkField<double>::Vars* out_vars) {
    auto cv = coarse.vars(t, false);
    auto fv = fine.vars(t, false);
    auto wv = field.vars(t, trainable);
    auto rays = RayBatch<double>::from_camera(cam, patch.coords(), 2.0, 6.0);
    RenderRequest req;
    req.preset.n_asp = 4;
    req.preset.n_isp = 0;
    req.seed = 5;
    auto msg_block = field.fusion_message_block(t, wv, msg);
    auto out = render_rays<double>(t, coarse, cv, fine, fv, &field, &wv, msg_block, rays, req);
    if (out_vars != nullptr) *out_vars = wv;
    return t.sum(t.mul(out.wm, t.constant(probe)));
  };

  Tape t;
  typename WatermarkField<double>::Vars wv;
  auto loss = render_loss(wm, t, true, &wv);
  t.backward(loss);
  std::vector<Tape::Var> leaves;
  wv.flatten(leaves);
  nn::ParamList<double> params;
  wm.register_params(params, "wm");

  for (size_t i = 0; i < params.size(); ++i) {
    Mat analytic = t.grad(leaves[i]);
    Mat fd = nt::fd_gradient(
        [&](const Mat& w) {
          WatermarkField<double> probe_field = wm;
          nn::ParamList<double> plist;
          probe_field.register_params(plist, "wm");
          *plist.mats[i] = w;
          Tape t2;
          return t2.val(render_loss(probe_field, t2, false, nullptr))(0, 0);
        },
        *params.mats[i], 1e-3);
    CHECK_MESSAGE(nt::max_rel_error(analytic, fd) < 1e-2, "param ", params.names[i]);
  }
}

TEST_CASE("presets: parser handles the published strategy names") {
  auto p1 = SamplingPreset::parse("32asp+32isp");
  CHECK(p1.n_asp == 32);
  CHECK(p1.n_isp == 32);
  CHECK_FALSE(p1.randomize);
  auto p2 = SamplingPreset::parse("64asp");
  CHECK(p2.n_asp == 64);
  CHECK(p2.n_isp == 0);
  auto p3 = SamplingPreset::parse("16asp+48isp");
  CHECK(p3.n_asp == 16);
  CHECK(p3.n_isp == 48);
  auto p4 = SamplingPreset::parse("64rsp");
  CHECK(p4.n_asp == 64);
  CHECK(p4.randomize);
  CHECK_THROWS_AS(SamplingPreset::parse("12xyz"), std::invalid_argument);
}
