// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nerfmark/metrics.hpp"
#include "nerfmark/training.hpp"

namespace nerfmark {

using json = nlohmann::json;

DistortionSpec EvalCondition::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  switch (kind) {
    case DistortionKind::identity: return DistortionSpec::identity();
    case DistortionKind::gaussian_noise: return DistortionSpec::noise(noise_mean, noise_std);
    case DistortionKind::rotation:
      return DistortionSpec::rotation((2.0 * u01(rng) - 1.0) * rot_max);
    case DistortionKind::scaling:
      return DistortionSpec::scaling(scale_min + u01(rng) * (scale_max - scale_min));
    case DistortionKind::gaussian_blur: return DistortionSpec::blur(blur_sigma);
  }
  return DistortionSpec::identity();
}

std::vector<EvalCondition> standard_conditions(const Config& cfg) {
  std::vector<EvalCondition> out;
  EvalCondition clean;
  out.push_back(clean);
  EvalCondition noise;
  noise.name = "noise";
  noise.kind = DistortionKind::gaussian_noise;
  noise.noise_std = cfg.get_double("eval.noise_std");
  out.push_back(noise);
  EvalCondition rot;
  rot.name = "rotation";
  rot.kind = DistortionKind::rotation;
  rot.rot_max = cfg.get_double("eval.rot_max");
  out.push_back(rot);
  EvalCondition scale;
  scale.name = "scaling";
  scale.kind = DistortionKind::scaling;
  scale.scale_min = cfg.get_double("eval.scale_min");
  scale.scale_max = cfg.get_double("eval.scale_max");
  out.push_back(scale);
  EvalCondition blur;
  blur.name = "blur";
  blur.kind = DistortionKind::gaussian_blur;
  blur.blur_sigma = cfg.get_double("eval.blur_sigma");
  out.push_back(blur);
  return out;
}

ImageRGB distort_image(const ImageRGB& img, const DistortionSpec& spec, std::mt19937_64& rng) {
  ad::Tape<float> t;
  auto out = apply_distortion<float>(t, t.constant(img.to_planar()), img.width, img.height, spec,
                                     rng);
  return ImageRGB::from_planar(t.val(out.image), out.width, out.height);
}

void EvalReport::recompute_aggregates() {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    acc[r.condition].first += r.accuracy;
    acc[r.condition].second += 1;
  }
  accuracy_by_condition.clear();
  for (const auto& [name, pair] : acc)
    accuracy_by_condition[name] = pair.first / std::max(1, pair.second);
  if (accuracy_by_condition.count("clean")) clean_accuracy = accuracy_by_condition["clean"];
}

void EvalReport::dump_jsonl(const std::string& path, const std::string& config_snapshot) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("eval: cannot write " + path);
  json header{{"record", "summary"},
              {"n_views", n_views},
              {"message_length", message_length},
              {"preset", preset},
              {"clean_accuracy", clean_accuracy},
              {"psnr_wm_vs_base", mean_psnr_wm_vs_base},
              {"ssim_wm_vs_base", mean_ssim_wm_vs_base},
              {"psnr_base_vs_gt", mean_psnr_base_vs_gt},
              {"ssim_base_vs_gt", mean_ssim_base_vs_gt},
              {"untrained_warning", untrained_warning},
              {"config", config_snapshot}};
  json accs;
  for (const auto& [k, v] : accuracy_by_condition) accs[k] = v;
  header["accuracy_by_condition"] = accs;
  out << header.dump() << "\n";
  for (const auto& r : rows) {
    json rec{{"record", "view"},       {"message_index", r.message_index},
             {"message", r.message},   {"view", r.view},
             {"condition", r.condition}, {"accuracy", r.accuracy},
             {"recovered", r.recovered_bits}};
    out << rec.dump() << "\n";
  }
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "views=" << n_views << " bits=" << message_length << " preset=" << preset << "\n";
  os << "  PSNR(wm,base)=" << mean_psnr_wm_vs_base << " dB  SSIM(wm,base)=" << mean_ssim_wm_vs_base
     << "\n";
  os << "  PSNR(base,gt)=" << mean_psnr_base_vs_gt << " dB  SSIM(base,gt)=" << mean_ssim_base_vs_gt
     << "\n";
  for (const auto& [k, v] : accuracy_by_condition)
    os << "  bit accuracy [" << k << "] = " << v << "\n";
  if (untrained_warning) os << "  WARNING: watermark stage has not been trained\n";
  return os.str();
}

EvalReport evaluate_views(const SceneModel& model, const Dataset& data,
                          const std::vector<Message>& messages, int n_views,
                          const SamplingPreset& preset,
                          const std::vector<EvalCondition>& conditions, uint64_t eval_seed) {
  if (messages.empty()) throw std::invalid_argument("evaluate: no messages");
  data.validate();
  EvalReport report;
  report.n_views = std::min<int>(n_views, static_cast<int>(data.test.size()));
  report.message_length = messages.front().length();
  report.preset = preset.name;
  report.untrained_warning = model.wm_step == 0;

  // Always include the clean channel.
  std::vector<EvalCondition> conds = conditions;
  bool has_clean = false;
  for (const auto& c : conds) has_clean = has_clean || c.kind == DistortionKind::identity;
  if (!has_clean) conds.insert(conds.begin(), EvalCondition{});

  double psnr_wb = 0, ssim_wb = 0, psnr_bg = 0, ssim_bg = 0;
  int quality_count = 0;

  for (size_t mi = 0; mi < messages.size(); ++mi) {
    const Message& msg = messages[mi];
    for (int v = 0; v < report.n_views; ++v) {
      const auto& view = data.test[v];
      const uint64_t tag = derive_seed(eval_seed, Stream::eval, mi, static_cast<uint64_t>(v));
      ViewRender render =
          render_view(model, view.camera, data.t_near, data.t_far, preset, &msg, tag);
      psnr_wb += psnr(render.wm, render.base);
      ssim_wb += ssim(render.wm, render.base);
      psnr_bg += psnr(render.base, view.rgb);
      ssim_bg += ssim(render.base, view.rgb);
      quality_count += 1;
      for (size_t ci = 0; ci < conds.size(); ++ci) {
        auto rng = make_rng(eval_seed, Stream::eval, 0xd0 + ci, (mi << 16) | v);
        const DistortionSpec spec = conds[ci].draw(rng);
        ImageRGB probe = spec.kind == DistortionKind::identity
                             ? render.wm
                             : distort_image(render.wm, spec, rng);
        const Message recovered = binarize(extract_from_image(model, probe));
        EvalRow row;
        row.message_index = static_cast<int>(mi);
        row.message = msg.to_bitstring();
        row.view = v;
        row.condition = conds[ci].name;
        row.accuracy = bit_accuracy(recovered, msg);
        row.recovered_bits = recovered.to_bitstring();
        report.rows.push_back(row);
      }
    }
  }
  if (quality_count > 0) {
    report.mean_psnr_wm_vs_base = psnr_wb / quality_count;
    report.mean_ssim_wm_vs_base = ssim_wb / quality_count;
    report.mean_psnr_base_vs_gt = psnr_bg / quality_count;
    report.mean_ssim_base_vs_gt = ssim_bg / quality_count;
  }
  report.recompute_aggregates();
  return report;
}

std::vector<std::pair<std::string, double>> sampling_robustness_suite(
    const SceneModel& model, const Dataset& data, const std::vector<Message>& messages,
    int n_views, const std::vector<SamplingPreset>& presets, uint64_t eval_seed) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& preset : presets) {
    EvalReport r = evaluate_views(model, data, messages, n_views, preset, {}, eval_seed);
    out.emplace_back(preset.name, r.clean_accuracy);
  }
  return out;
}

double weight_perturbation_attack(const SceneModel& model, double noise_std,
                                  const std::vector<Message>& messages, const Dataset& data,
                                  int n_views, const SamplingPreset& preset, uint64_t eval_seed,
                                  uint64_t noise_seed) {
  SceneModel attacked = model;  // noise is added to a copy, never in place
  attacked.perturb_model_weights(noise_std, noise_seed);
  EvalReport r = evaluate_views(attacked, data, messages, n_views, preset, {}, eval_seed);
  return r.clean_accuracy;
}

namespace {

void copy_base_blocks(SceneModel& dst, const SceneModel& src) {
  auto& src_mut = const_cast<SceneModel&>(src);
  nn::ParamList<float> from = src_mut.base_params();
  nn::ParamList<float> to = dst.base_params();
  if (from.size() != to.size()) throw std::runtime_error("ablation: base parameter shape mismatch");
  for (size_t i = 0; i < from.size(); ++i) *to.mats[i] = *from.mats[i];
  dst.base_step = src.base_step;
}

}  // namespace

std::vector<AblationResult> ablation_suite(const SceneModel& base_model, const Dataset& data,
                                           const std::vector<std::string>& toggles,
                                           uint64_t wm_steps, const std::vector<Message>& messages,
                                           int n_views, uint64_t eval_seed) {
  std::vector<AblationResult> results;
  for (const auto& toggle : toggles) {
    Config cfg = base_model.cfg;
    bool drs = false;
    if (toggle == "full") {
    } else if (toggle == "wo_mff") {
      cfg.set("wm.use_mff", "0");
    } else if (toggle == "wo_cff") {
      cfg.set("wm.use_cff", "0");
    } else if (toggle == "wo_drr") {
      cfg.set("train.use_distortions", "0");
      cfg.set("train.use_random_sampling", "0");
    } else if (toggle == "drs") {
      drs = true;  // full model, randomized rendering at test time
    } else {
      throw std::invalid_argument("ablation: unknown toggle '" + toggle + "'");
    }
    SceneModel variant = SceneModel::create(cfg);
    copy_base_blocks(variant, base_model);
    train_watermark_stage(variant, data, wm_steps, nullptr);
    SamplingPreset preset = SamplingPreset::parse(cfg.get("render.preset"));
    if (drs) preset.randomize = true;
    EvalReport report = evaluate_views(variant, data, messages, n_views, preset, {}, eval_seed);
    results.push_back({toggle, std::move(report)});
  }
  return results;
}

}  // namespace nerfmark
