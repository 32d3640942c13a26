// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "nerfmark/distortion.hpp"
#include "nerfmark/metrics.hpp"

namespace nerfmark {

using json = nlohmann::json;
using Tape = ad::Tape<float>;
using Var = Tape::Var;

Message sample_training_message(std::mt19937_64& rng, int n_bits) {
  if (!Message::length_supported(n_bits))
    throw std::invalid_argument("sample_training_message: unsupported length");
  Message m;
  if (n_bits <= 16) {
    std::uniform_int_distribution<uint64_t> pick(0, (uint64_t(1) << n_bits) - 1);
    m = Message::from_index(pick(rng), n_bits);
  } else {
    std::uniform_int_distribution<int> bit(0, 1);
    m.bits.resize(n_bits);
    for (auto& b : m.bits) b = static_cast<uint8_t>(bit(rng));
  }
  return m;
}

JsonlLogger::JsonlLogger(const std::string& path) : active_(!path.empty()), path_(path) {
  if (active_) std::ofstream(path_, std::ios::trunc);  // start fresh
}

void JsonlLogger::log(const std::string& line) {
  if (!active_) return;
  std::ofstream out(path_, std::ios::app);
  out << line << "\n";
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::vector<ad::Mat<float>> collect_grads(Tape& t, const std::vector<Var>& leaves) {
  std::vector<ad::Mat<float>> grads;
  grads.reserve(leaves.size());
  for (Var v : leaves) grads.push_back(t.grad(v));
  return grads;
}

double holdout_psnr(const SceneModel& model, const Dataset& data) {
  const auto& view = data.test.front();
  const SamplingPreset preset = SamplingPreset::parse(model.cfg.get("render.preset"));
  ViewRender r = render_view(model, view.camera, data.t_near, data.t_far, preset, nullptr,
                             /*tag=*/0xe0a1);
  return psnr(r.base, view.rgb);
}

struct WindowTracker {
  std::vector<double> first, last;
  uint64_t total = 0, window = 0;
  void configure(uint64_t steps) {
    total = steps;
    window = std::max<uint64_t>(1, steps / 10);
  }
  void push(uint64_t local_step, double loss) {
    if (local_step < window) first.push_back(loss);
    if (local_step + window >= total) last.push_back(loss);
  }
};

}  // namespace

StageStats train_base_stage(SceneModel& model, const Dataset& data, uint64_t steps,
                            JsonlLogger* log) {
  data.validate();
  const Config& cfg = model.cfg;
  const int batch = cfg.get_int("train.base_rays");
  const int n_coarse = cfg.get_int("render.n_coarse");
  const int n_fine = cfg.get_int("render.n_fine");
  const double lr0 = cfg.get_double("train.lr");
  const double decay = cfg.get_double("train.lr_decay");
  const uint64_t total_cfg = std::max<uint64_t>(1, cfg.get_int64("train.base_steps"));
  const uint64_t eval_interval = cfg.get_int64("train.eval_interval");
  const uint64_t log_interval = cfg.get_int64("train.log_interval");

  nn::ParamList<float> params = model.base_params();
  WindowTracker tracker;
  tracker.configure(steps);
  StageStats stats;

  const int width = data.train.front().rgb.width;
  const int height = data.train.front().rgb.height;

  for (uint64_t local = 0; local < steps; ++local) {
    const uint64_t step = model.base_step;
    auto step_rng = make_rng(model.seed, Stream::base_rays, step);
    std::uniform_int_distribution<int> pick_img(0, static_cast<int>(data.train.size()) - 1);
    std::uniform_int_distribution<int> pick_x(0, width - 1);
    std::uniform_int_distribution<int> pick_y(0, height - 1);

    std::vector<Ray> rays;
    std::vector<uint64_t> ids;
    ad::Mat<float> gt(3, batch);
    rays.reserve(batch);
    for (int i = 0; i < batch; ++i) {
      const int img = pick_img(step_rng);
      const int x = pick_x(step_rng);
      const int y = pick_y(step_rng);
      const auto& pi = data.train[img];
      Ray r;
      pi.camera.pixel_ray(x, y, r.origin, r.direction);
      r.t_near = data.t_near;
      r.t_far = data.t_far;
      rays.push_back(r);
      ids.push_back((static_cast<uint64_t>(img) << 32) |
                    (static_cast<uint64_t>(y) * width + x));
      const float* px = pi.rgb.pixel(x, y);
      for (int c = 0; c < 3; ++c) gt(c, i) = px[c];
    }

    Tape t;
    auto coarse_vars = model.coarse.vars(t, true);
    auto fine_vars = model.fine.vars(t, true);
    RenderRequest req;
    req.preset.n_asp = n_coarse;
    req.preset.n_isp = n_fine;
    req.jitter = true;
    req.composite_coarse = true;
    req.seed = model.seed;
    req.tag = step;
    auto out = render_rays<float>(t, model.coarse, coarse_vars, model.fine, fine_vars, nullptr,
                                  nullptr, {}, RayBatch<float>::from_rays(rays, ids), req);
    Var gt_var = t.constant(gt);
    Var loss = t.add(reconstruction_loss(t, out.coarse, gt_var),
                     reconstruction_loss(t, out.base, gt_var));
    const double loss_val = t.val(loss)(0, 0);
    if (!std::isfinite(loss_val))
      throw std::runtime_error("base training diverged at step " + std::to_string(step) +
                               " (loss is not finite)");
    t.backward(loss);

    std::vector<Var> leaves;
    coarse_vars.flatten(leaves);
    fine_vars.flatten(leaves);
    const double lr = lr0 * std::pow(decay, static_cast<double>(step) / total_cfg);
    model.base_opt.step(params, collect_grads(t, leaves), static_cast<float>(lr));
    model.base_step += 1;
    tracker.push(local, loss_val);
    stats.steps_run += 1;

    if (log != nullptr && (step % log_interval == 0 || local + 1 == steps)) {
      json rec{{"stage", "base"}, {"step", step}, {"loss", loss_val}, {"lr", lr}};
      if (eval_interval > 0 && (step % eval_interval == 0 || local + 1 == steps)) {
        const double p = holdout_psnr(model, data);
        rec["holdout_psnr"] = p;
        stats.final_metric = p;
      }
      log->log(rec.dump());
    }
  }
  if (steps > 0 && stats.final_metric == 0) stats.final_metric = holdout_psnr(model, data);
  stats.first_window_median_loss = median(tracker.first);
  stats.last_window_median_loss = median(tracker.last);
  return stats;
}

StageStats train_watermark_stage(SceneModel& model, const Dataset& data, uint64_t steps,
                                 JsonlLogger* log) {
  data.validate();
  const Config& cfg = model.cfg;
  const int n_coarse = cfg.get_int("render.n_coarse");
  const int n_fine = cfg.get_int("render.n_fine");
  const int n_bits = cfg.get_int("train.nb");
  const double lr0 = cfg.get_double("train.lr");
  const double decay = cfg.get_double("train.lr_decay");
  const uint64_t total_cfg = std::max<uint64_t>(1, cfg.get_int64("train.wm_steps"));
  const uint64_t log_interval = cfg.get_int64("train.log_interval");
  const float lambda = static_cast<float>(cfg.get_double("train.lambda"));
  const float gamma1 = static_cast<float>(cfg.get_double("train.gamma1"));
  const float gamma2 = static_cast<float>(cfg.get_double("train.gamma2"));
  const bool use_distortions = cfg.get_bool("train.use_distortions");
  const bool use_random_sampling = cfg.get_bool("train.use_random_sampling");
  const std::vector<int> patch_sizes = cfg.get_int_list("train.patch_sizes");
  if (patch_sizes.empty()) throw std::runtime_error("train.patch_sizes is empty");

  DistortionRanges ranges;
  ranges.enabled.clear();
  for (const auto& name : cfg.get_list("train.distortions"))
    ranges.enabled.push_back(distortion_kind_from_string(name));
  ranges.noise_mean = cfg.get_double("train.noise_mean");
  ranges.noise_std_max = cfg.get_double("train.noise_std_max");
  ranges.rot_max = cfg.get_double("train.rot_max");
  ranges.scale_min = cfg.get_double("train.scale_min");
  ranges.scale_max = cfg.get_double("train.scale_max");
  ranges.blur_sigma_max = cfg.get_double("train.blur_sigma_max");

  RandomConvPerceptual<float> psi(model.seed);

  nn::ParamList<float> params = model.wm_params();
  WindowTracker tracker;
  tracker.configure(steps);
  StageStats stats;
  std::vector<double> recent_acc;

  const int width = data.train.front().rgb.width;
  const int height = data.train.front().rgb.height;
  const double beta_factor = cfg.get_double("render.beta_factor");

  for (uint64_t local = 0; local < steps; ++local) {
    const uint64_t step = model.wm_step;

    auto msg_rng = make_rng(model.seed, Stream::message, step);
    const Message message = sample_training_message(msg_rng, n_bits);

    auto patch_rng = make_rng(model.seed, Stream::patch, step);
    std::uniform_int_distribution<size_t> pick_k(0, patch_sizes.size() - 1);
    std::uniform_int_distribution<int> pick_view(0, static_cast<int>(data.train.size()) - 1);
    const int k = patch_sizes[pick_k(patch_rng)];
    const int view = pick_view(patch_rng);
    const PatchSpec patch = sample_patch_spec(patch_rng, width, height, k);

    Tape t;
    auto coarse_vars = model.coarse.vars(t, false);  // frozen
    auto fine_vars = model.fine.vars(t, false);      // frozen
    auto wm_vars = model.wm.vars(t, true);
    auto ext_vars = model.extractor.vars(t, true);

    RenderRequest req;
    req.preset.n_asp = n_coarse;
    req.preset.n_isp = n_fine;
    req.jitter = true;
    req.randomize = use_random_sampling;
    req.beta = beta_factor * (data.t_far - data.t_near) / std::max(1, n_coarse + n_fine);
    req.seed = model.seed;
    req.tag = 0x70000000ULL + step;

    Var msg_block = model.wm.fusion_message_block(t, wm_vars, message);
    auto rays = RayBatch<float>::from_camera(data.train[view].camera, patch.coords(), data.t_near,
                                             data.t_far);
    auto out = render_rays<float>(t, model.coarse, coarse_vars, model.fine, fine_vars, &model.wm,
                                  &wm_vars, msg_block, rays, req);

    // Distortion layer on the watermarked patch.
    DistortionSpec spec = DistortionSpec::identity();
    if (use_distortions) {
      auto dist_rng = make_rng(model.seed, Stream::distortion, step);
      spec = sample_distortion(dist_rng, ranges);
    }
    auto dist_rng_apply = make_rng(model.seed, Stream::distortion, step, 1);
    DistortedImage<float> distorted =
        apply_distortion<float>(t, out.wm, patch.size, patch.size, spec, dist_rng_apply);

    Var logits = model.extractor.extract_logits(t, ext_vars, distorted.image, distorted.width,
                                                distorted.height, /*training=*/true);
    Var l_msg = message_loss(t, logits, message);
    Var l_content = content_loss<float>(t, out.wm, out.base, patch.size, patch.size, &psi, lambda);
    Var loss = total_loss(t, l_content, l_msg, gamma1, gamma2);

    const double loss_val = t.val(loss)(0, 0);
    const double msg_val = t.val(l_msg)(0, 0);
    const double content_val = t.val(l_content)(0, 0);
    const double acc = bit_accuracy(binarize(t.val(logits)), message);
    if (!std::isfinite(loss_val))
      throw std::runtime_error("watermark training diverged at step " + std::to_string(step) +
                               " (loss is not finite)");
    t.backward(loss);

    std::vector<Var> leaves;
    wm_vars.flatten(leaves);
    ext_vars.flatten(leaves);
    const double lr = lr0 * std::pow(decay, static_cast<double>(step) / total_cfg);
    model.wm_opt.step(params, collect_grads(t, leaves), static_cast<float>(lr));
    model.wm_step += 1;
    tracker.push(local, loss_val);
    stats.steps_run += 1;
    recent_acc.push_back(acc);
    if (recent_acc.size() > 50) recent_acc.erase(recent_acc.begin());

    if (log != nullptr && (step % log_interval == 0 || local + 1 == steps)) {
      json rec{{"stage", "watermark"}, {"step", step},        {"loss", loss_val},
               {"loss_msg", msg_val},  {"loss_content", content_val}, {"lr", lr},
               {"bit_acc", acc},       {"patch", patch.size}, {"distortion", spec.describe()}};
      log->log(rec.dump());
    }
  }
  stats.first_window_median_loss = median(tracker.first);
  stats.last_window_median_loss = median(tracker.last);
  stats.final_metric =
      recent_acc.empty()
          ? 0
          : std::accumulate(recent_acc.begin(), recent_acc.end(), 0.0) / recent_acc.size();
  return stats;
}

}  // namespace nerfmark
