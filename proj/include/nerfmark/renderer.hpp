// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "nerfmark/camera.hpp"
#include "nerfmark/radiance_field.hpp"
#include "nerfmark/rng.hpp"
#include "nerfmark/watermark_field.hpp"

namespace nerfmark {

struct PixelCoord {
  int x = 0, y = 0;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit
  double t_near = 0, t_far = 0;

  void validate() const {
    if (std::abs(direction.norm() - 1.0) > 1e-6)
      throw std::invalid_argument("ray: direction is not unit length");
    if (!(0 < t_near && t_near < t_far))
      throw std::invalid_argument("ray: requires 0 < t_near < t_far");
  }
};

// K x K patch of pixel coordinates centered at (cx, cy). Offsets run over
// {-K/2, ..., K/2-1} in row-major order.
struct PatchSpec {
  int cx = 0, cy = 0;
  int size = 0;

  void validate(int width, int height) const {
    if (size < 2 || size % 2 != 0) throw std::invalid_argument("patch: size must be even, >= 2");
    if (cx - size / 2 < 0 || cy - size / 2 < 0 || cx + size / 2 - 1 >= width ||
        cy + size / 2 - 1 >= height)
      throw std::invalid_argument("patch: coordinates leave the image domain");
  }

  std::vector<PixelCoord> coords() const {
    std::vector<PixelCoord> out;
    out.reserve(static_cast<size_t>(size) * size);
    for (int dy = -size / 2; dy < size / 2; ++dy)
      for (int dx = -size / 2; dx < size / 2; ++dx) out.push_back({cx + dx, cy + dy});
    return out;
  }
};

// Patch center drawn uniformly over the positions where the whole patch
// fits; a patch as large as the image degenerates to the single valid
// center (clamping rather than rejection keeps training total).
inline PatchSpec sample_patch_spec(std::mt19937_64& rng, int width, int height, int k) {
  if (k % 2 != 0 || k < 2) throw std::invalid_argument("patch: size must be even, >= 2");
  if (k > width || k > height) throw std::invalid_argument("patch: size exceeds image");
  std::uniform_int_distribution<int> dx(k / 2, width - k / 2);
  std::uniform_int_distribution<int> dy(k / 2, height - k / 2);
  return PatchSpec{dx(rng), dy(rng), k};
}

inline std::vector<Ray> generate_rays(const CameraModel& cam,
                                      const std::vector<PixelCoord>& coords, double t_near,
                                      double t_far) {
  std::vector<Ray> rays;
  rays.reserve(coords.size());
  for (const auto& c : coords) {
    if (c.x < 0 || c.y < 0 || c.x >= cam.width || c.y >= cam.height)
      throw std::invalid_argument("generate_rays: pixel (" + std::to_string(c.x) + "," +
                                  std::to_string(c.y) + ") outside image");
    Ray r;
    cam.pixel_ray(c.x, c.y, r.origin, r.direction);
    r.t_near = t_near;
    r.t_far = t_far;
    rays.push_back(r);
  }
  return rays;
}

// ---- per-ray sample sequences ---------------------------------------------

// One t per uniform bin, jittered inside the bin (midpoints when jitter is
// off). Strictly increasing by construction.
inline std::vector<double> stratified_ts(double t_near, double t_far, int n, std::mt19937_64& rng,
                                         bool jitter) {
  if (n < 1) throw std::invalid_argument("stratified_ts: need at least one sample");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double h = (t_far - t_near) / n;
  std::vector<double> ts(n);
  for (int i = 0; i < n; ++i) ts[i] = t_near + (i + (jitter ? u01(rng) : 0.5)) * h;
  return ts;
}

// Inverse-transform sampling from the piecewise-constant density with mass
// `weights[i]` on [edges[i], edges[i+1]).
inline std::vector<double> sample_piecewise_pdf(const std::vector<double>& edges,
                                                const std::vector<double>& weights, int n,
                                                std::mt19937_64& rng) {
  const size_t bins = weights.size();
  if (edges.size() != bins + 1) throw std::invalid_argument("piecewise pdf: edge/weight mismatch");
  double total = 0;
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("piecewise pdf: negative weight");
    total += w;
  }
  if (total <= 0) throw std::invalid_argument("piecewise pdf: all-zero weights");
  std::vector<double> cdf(bins + 1, 0.0);
  for (size_t i = 0; i < bins; ++i) cdf[i + 1] = cdf[i] + weights[i] / total;
  cdf[bins] = 1.0;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) {
    const double u = u01(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    size_t b = std::min(bins - 1, static_cast<size_t>(std::max<long>(0, it - cdf.begin() - 1)));
    const double lo = cdf[b], hi = cdf[b + 1];
    const double frac = hi > lo ? (u - lo) / (hi - lo) : 0.5;
    out[k] = edges[b] + frac * (edges[b + 1] - edges[b]);
  }
  return out;
}

// Importance samples from coarse compositing weights, merged with the
// coarse sequence and re-sorted. Falls back to stratified when every
// weight is zero (logged, not silent).
inline std::vector<double> importance_merge_ts(const std::vector<double>& coarse_ts,
                                               const std::vector<double>& coarse_weights,
                                               double t_near, double t_far, int n_imp,
                                               std::mt19937_64& rng) {
  if (n_imp < 1) return coarse_ts;
  double total = 0;
  for (double w : coarse_weights) {
    if (w < 0) throw std::invalid_argument("importance: negative weight");
    total += w;
  }
  std::vector<double> merged = coarse_ts;
  if (total <= 0) {
    std::fprintf(stderr, "[nerfmark] importance sampling: all-zero weights, stratified fallback\n");
    auto extra = stratified_ts(t_near, t_far, n_imp, rng, true);
    merged.insert(merged.end(), extra.begin(), extra.end());
  } else {
    std::vector<double> edges(coarse_ts.begin(), coarse_ts.end());
    edges.push_back(t_far);
    auto extra = sample_piecewise_pdf(edges, coarse_weights, n_imp, rng);
    merged.insert(merged.end(), extra.begin(), extra.end());
  }
  std::sort(merged.begin(), merged.end());
  return merged;
}

// Random-sampling perturbation: independent Gaussian shifts of std beta,
// clamped to the ray extent and re-sorted. Exact ties after clamping are
// separated by a small epsilon so spacings stay positive.
inline std::vector<double> randomize_ts(const std::vector<double>& ts, double beta, double t_near,
                                        double t_far, std::mt19937_64& rng) {
  if (beta < 0) throw std::invalid_argument("randomize_ts: beta must be >= 0");
  if (beta == 0) return ts;
  std::normal_distribution<double> gauss(0.0, beta);
  std::vector<double> out(ts.size());
  for (size_t i = 0; i < ts.size(); ++i)
    out[i] = std::clamp(ts[i] + gauss(rng), t_near, t_far);
  std::sort(out.begin(), out.end());
  const double eps = 1e-9 * (t_far - t_near);
  for (size_t i = ts.size(); i-- > 0;)  // make room below t_far, back to front
    out[i] = std::min(out[i], t_far - eps * (ts.size() - 1 - i));
  for (size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1] + eps);
  // Rounding in the pass above can drift the tail one ulp past t_far;
  // the drift is far below eps, so clamping cannot reintroduce ties.
  for (double& v : out) v = std::min(v, t_far);
  return out;
}

inline std::vector<double> deltas_from_ts(const std::vector<double>& ts, double t_far) {
  std::vector<double> d(ts.size());
  for (size_t i = 0; i + 1 < ts.size(); ++i) d[i] = ts[i + 1] - ts[i];
  d.back() = t_far - ts.back();  // open last interval capped at t_far
  return d;
}

// ---- alpha compositing ------------------------------------------------------

// Single-ray compositing used by the public API and tests; the batched
// tape version below is the training path.
struct CompositeResult {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  std::vector<double> transmittance;  // T_i, T_1 = 1
  std::vector<double> weights;        // T_i * (1 - exp(-sigma_i delta_i))
};

inline CompositeResult composite_ray(const std::vector<double>& deltas,
                                     const std::vector<double>& sigmas,
                                     const std::vector<Eigen::Vector3d>& colors) {
  const size_t n = deltas.size();
  if (sigmas.size() != n || colors.size() != n)
    throw std::invalid_argument("composite: length mismatch");
  CompositeResult res;
  res.transmittance.resize(n);
  res.weights.resize(n);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(sigmas[i]) || !std::isfinite(deltas[i]) || !colors[i].allFinite())
      throw std::invalid_argument("composite: non-finite input");
    if (sigmas[i] < 0) throw std::invalid_argument("composite: sigma must be >= 0");
    res.transmittance[i] = std::exp(-acc);
    const double alpha = 1.0 - std::exp(-sigmas[i] * deltas[i]);
    res.weights[i] = res.transmittance[i] * alpha;
    res.rgb += res.weights[i] * colors[i];
    acc += sigmas[i] * deltas[i];
  }
  return res;
}

// Batched compositing on the tape. sigma: (S*N) x 1 ordered sample-fastest
// per ray, colors: (S*N) x 3, deltas: S x N. Returns the 3 x N planar image.
template <typename S>
typename ad::Tape<S>::Var composite_batch(ad::Tape<S>& t, typename ad::Tape<S>::Var sigma,
                                          typename ad::Tape<S>::Var colors,
                                          const ad::Mat<S>& deltas) {
  const int sn = static_cast<int>(deltas.rows());
  const int n = static_cast<int>(deltas.cols());
  auto sig = t.reshape(sigma, sn, n);
  auto sd = t.mul(sig, t.constant(deltas));
  auto transmittance = t.exp(t.neg(t.cumsum_exclusive_rows(sd)));
  auto alpha = t.add_scalar(t.neg(t.exp(t.neg(sd))), S(1));
  auto w = t.mul(transmittance, alpha);
  std::vector<typename ad::Tape<S>::Var> channels;
  for (int c = 0; c < 3; ++c) {
    auto cc = t.reshape(t.block(colors, 0, c, sn * n, 1), sn, n);
    channels.push_back(t.colwise_sum(t.mul(w, cc)));
  }
  return t.concat_rows(channels);
}

// Plain compositing weights for importance sampling (no gradients).
template <typename S>
ad::Mat<S> compositing_weights(const ad::Mat<S>& sigma_flat, const ad::Mat<S>& deltas) {
  const Eigen::Index sn = deltas.rows(), n = deltas.cols();
  ad::Mat<S> sig = Eigen::Map<const ad::Mat<S>>(sigma_flat.data(), sn, n);
  ad::Mat<S> w(sn, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    S acc = 0;
    for (Eigen::Index i = 0; i < sn; ++i) {
      const S sd = sig(i, r) * deltas(i, r);
      w(i, r) = std::exp(-acc) * (S(1) - std::exp(-sd));
      acc += sd;
    }
  }
  return w;
}

// ---- sampling presets --------------------------------------------------------

// Inference-time strategies: stratified points ("asp"), importance points
// from a coarse pass ("isp"), and Gaussian-shifted stratified points
// ("rsp"). Combinations are written like "32asp+32isp".
struct SamplingPreset {
  int n_asp = 32;
  int n_isp = 0;
  bool randomize = false;
  std::string name = "32asp";

  static SamplingPreset parse(const std::string& text) {
    SamplingPreset p;
    p.n_asp = 0;
    p.name = text;
    std::string token;
    std::stringstream ss(text);
    while (std::getline(ss, token, '+')) {
      size_t pos = 0;
      while (pos < token.size() && (std::isdigit(token[pos]) || std::isspace(token[pos]))) ++pos;
      const int count = std::stoi(token.substr(0, pos));
      std::string kind = token.substr(pos);
      kind.erase(std::remove_if(kind.begin(), kind.end(), ::isspace), kind.end());
      std::transform(kind.begin(), kind.end(), kind.begin(), ::tolower);
      if (count < 1) throw std::invalid_argument("preset: counts must be >= 1");
      if (kind == "asp") {
        p.n_asp += count;
      } else if (kind == "isp") {
        p.n_isp += count;
      } else if (kind == "rsp") {
        p.n_asp += count;
        p.randomize = true;
      } else {
        throw std::invalid_argument("preset: unknown kind '" + kind + "'");
      }
    }
    if (p.n_asp < 1) throw std::invalid_argument("preset: needs at least one asp/rsp point");
    return p;
  }

  int total() const { return n_asp + n_isp; }
};

// ---- batched ray rendering ----------------------------------------------------

template <typename S>
struct RayBatch {
  ad::Mat<S> origins;  // N x 3
  ad::Mat<S> dirs;     // N x 3 unit
  std::vector<uint64_t> ids;  // per-ray stream keys (schedule independent)
  double t_near = 0, t_far = 0;

  int count() const { return static_cast<int>(origins.rows()); }

  static RayBatch from_rays(const std::vector<Ray>& rays, const std::vector<uint64_t>& ids) {
    if (rays.empty()) throw std::invalid_argument("ray batch: empty");
    if (ids.size() != rays.size()) throw std::invalid_argument("ray batch: id count mismatch");
    RayBatch b;
    b.origins.resize(rays.size(), 3);
    b.dirs.resize(rays.size(), 3);
    b.ids = ids;
    b.t_near = rays[0].t_near;
    b.t_far = rays[0].t_far;
    for (size_t i = 0; i < rays.size(); ++i) {
      rays[i].validate();
      b.origins.row(i) = rays[i].origin.cast<S>();
      b.dirs.row(i) = rays[i].direction.cast<S>();
    }
    return b;
  }

  static RayBatch from_camera(const CameraModel& cam, const std::vector<PixelCoord>& coords,
                              double t_near, double t_far) {
    std::vector<uint64_t> ids;
    ids.reserve(coords.size());
    for (const auto& c : coords)
      ids.push_back(static_cast<uint64_t>(c.y) * cam.width + c.x);
    return from_rays(generate_rays(cam, coords, t_near, t_far), ids);
  }
};

struct RenderRequest {
  SamplingPreset preset;
  double beta = 0;           // shift std used when randomizing
  bool jitter = false;       // stratified jitter (training)
  bool randomize = false;    // apply Gaussian shifts to the final sequence
  bool composite_coarse = false;
  uint64_t seed = 0;
  uint64_t tag = 0;          // step index or render call id
};

template <typename S>
struct RenderOutput {
  using Var = typename ad::Tape<S>::Var;
  Var base;    // 3 x N
  Var wm;      // 3 x N when a watermark field was supplied
  Var coarse;  // 3 x N when requested
};

// Renders a batch of rays through the coarse/fine fields and optionally the
// watermarked color representation on the same sample points. All sampling
// randomness is derived from (seed, tag, ray id), so results do not depend
// on batch splitting or thread schedule.
template <typename S>
RenderOutput<S> render_rays(ad::Tape<S>& t, const BaseField<S>& coarse,
                            const typename BaseField<S>::Vars& coarse_vars,
                            const BaseField<S>& fine,
                            const typename BaseField<S>::Vars& fine_vars,
                            const WatermarkField<S>* wm,
                            const typename WatermarkField<S>::Vars* wm_vars,
                            typename ad::Tape<S>::Var msg_block, const RayBatch<S>& rays,
                            const RenderRequest& req) {
  using Var = typename ad::Tape<S>::Var;
  const int n = rays.count();
  const int n_asp = req.preset.n_asp, n_isp = req.preset.n_isp;
  const bool randomize = req.randomize || req.preset.randomize;

  // Per-ray stratified base sequence.
  std::vector<std::vector<double>> ray_ts(n);
  for (int r = 0; r < n; ++r) {
    auto rng = make_rng(req.seed, Stream::ray_jitter, req.tag, rays.ids[r]);
    ray_ts[r] = stratified_ts(rays.t_near, rays.t_far, n_asp, rng, req.jitter);
  }

  RenderOutput<S> out;

  // Coarse pass: needed for importance weights and optionally compositing.
  if (n_isp > 0 || req.composite_coarse) {
    ad::Mat<S> deltas_c(n_asp, n);
    ad::Mat<S> pts(static_cast<Eigen::Index>(n) * n_asp, 3);
    for (int r = 0; r < n; ++r) {
      auto d = deltas_from_ts(ray_ts[r], rays.t_far);
      for (int i = 0; i < n_asp; ++i) {
        deltas_c(i, r) = static_cast<S>(d[i]);
        pts.row(static_cast<Eigen::Index>(r) * n_asp + i) =
            rays.origins.row(r) + static_cast<S>(ray_ts[r][i]) * rays.dirs.row(r);
      }
    }
    Var enc_x = t.constant(encode_batch<S>(pts, coarse.cfg.enc_pos));
    ad::Mat<S> weights;
    if (req.composite_coarse) {
      auto [sigma_c, z_c] = coarse.query_sigma_z(t, coarse_vars, enc_x);
      ad::Mat<S> dirs_rep(static_cast<Eigen::Index>(n) * n_asp, 3);
      for (int r = 0; r < n; ++r)
        dirs_rep.middleRows(static_cast<Eigen::Index>(r) * n_asp, n_asp) =
            rays.dirs.row(r).replicate(n_asp, 1);
      Var enc_d = t.constant(encode_batch<S>(dirs_rep, coarse.cfg.enc_dir));
      Var c_c = coarse.query_color(t, coarse_vars, z_c, enc_d);
      out.coarse = composite_batch(t, sigma_c, c_c, deltas_c);
      weights = compositing_weights<S>(t.val(sigma_c), deltas_c);
    } else {
      Var sigma_c = coarse.query_sigma(t, coarse_vars, enc_x);
      weights = compositing_weights<S>(t.val(sigma_c), deltas_c);
    }
    if (n_isp > 0) {
      for (int r = 0; r < n; ++r) {
        std::vector<double> w(n_asp);
        for (int i = 0; i < n_asp; ++i) w[i] = weights(i, r);
        auto rng = make_rng(req.seed, Stream::importance, req.tag, rays.ids[r]);
        ray_ts[r] = importance_merge_ts(ray_ts[r], w, rays.t_near, rays.t_far, n_isp, rng);
      }
    }
  }

  if (randomize && req.beta > 0) {
    for (int r = 0; r < n; ++r) {
      auto rng = make_rng(req.seed, Stream::shift, req.tag, rays.ids[r]);
      ray_ts[r] = randomize_ts(ray_ts[r], req.beta, rays.t_near, rays.t_far, rng);
    }
  }

  // Fine pass over the merged sequence.
  const int sn = static_cast<int>(ray_ts[0].size());
  ad::Mat<S> deltas(sn, n);
  ad::Mat<S> pts(static_cast<Eigen::Index>(n) * sn, 3);
  ad::Mat<S> dirs_rep(static_cast<Eigen::Index>(n) * sn, 3);
  for (int r = 0; r < n; ++r) {
    auto d = deltas_from_ts(ray_ts[r], rays.t_far);
    for (int i = 0; i < sn; ++i) {
      deltas(i, r) = static_cast<S>(d[i]);
      pts.row(static_cast<Eigen::Index>(r) * sn + i) =
          rays.origins.row(r) + static_cast<S>(ray_ts[r][i]) * rays.dirs.row(r);
    }
    dirs_rep.middleRows(static_cast<Eigen::Index>(r) * sn, sn) = rays.dirs.row(r).replicate(sn, 1);
  }
  Var enc_x = t.constant(encode_batch<S>(pts, fine.cfg.enc_pos));
  Var enc_d = t.constant(encode_batch<S>(dirs_rep, fine.cfg.enc_dir));
  auto [sigma_f, z_f] = fine.query_sigma_z(t, fine_vars, enc_x);
  Var c_f = fine.query_color(t, fine_vars, z_f, enc_d);
  out.base = composite_batch(t, sigma_f, c_f, deltas);

  if (wm != nullptr && wm_vars != nullptr) {
    Var c_m = wm->watermarked_color(t, *wm_vars, c_f, enc_x, enc_d, msg_block);
    out.wm = composite_batch(t, sigma_f, c_m, deltas);
  }
  return out;
}

}  // namespace nerfmark
