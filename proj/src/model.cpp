// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/model.hpp"

#include <stdexcept>

namespace nerfmark {

BaseFieldConfig base_field_config(const Config& cfg) {
  BaseFieldConfig f;
  const std::string preset = cfg.get("field.preset");
  if (preset == "desk") {
    f.layers = 4;
    f.width = 64;
    f.z_width = 64;
    f.skip_layer = -1;
    f.color_hidden = 64;
  } else if (preset == "paper") {
    f.layers = 8;
    f.width = 256;
    f.z_width = 256;
    f.skip_layer = 4;
    f.color_hidden = 128;
  } else if (preset == "custom") {
    f.layers = cfg.get_int("field.layers");
    f.width = cfg.get_int("field.width");
    f.z_width = cfg.get_int("field.z_width");
    f.skip_layer = cfg.get_int("field.skip_layer");
    f.color_hidden = cfg.get_int("field.color_hidden");
  } else {
    throw std::runtime_error("field.preset must be desk, paper, or custom");
  }
  f.enc_pos = EncodingConfig{cfg.get_int("enc.pos_freqs"), cfg.get_bool("enc.include_input")};
  f.enc_dir = EncodingConfig{cfg.get_int("enc.dir_freqs"), cfg.get_bool("enc.include_input")};
  return f;
}

WatermarkFieldConfig watermark_field_config(const Config& cfg) {
  WatermarkFieldConfig w;
  w.n_bits = cfg.get_int("train.nb");
  w.nc = cfg.get_int("wm.nc");
  w.nm = cfg.get_int("wm.nm");
  w.e_hidden = cfg.get_int("wm.e_hidden");
  w.g_hidden = cfg.get_int("wm.g_hidden");
  w.delta_scale = cfg.get_double("wm.delta_scale");
  w.use_cff = cfg.get_bool("wm.use_cff");
  w.use_mff = cfg.get_bool("wm.use_mff");
  w.enc_pos = EncodingConfig{cfg.get_int("enc.pos_freqs"), cfg.get_bool("enc.include_input")};
  w.enc_dir = EncodingConfig{cfg.get_int("enc.dir_freqs"), cfg.get_bool("enc.include_input")};
  return w;
}

ExtractorConfig extractor_config(const Config& cfg) {
  ExtractorConfig e;
  e.n_bits = cfg.get_int("train.nb");
  e.widths = cfg.get_int_list("ext.widths");
  e.head_hidden = cfg.get_int("ext.head_hidden");
  e.min_input = cfg.get_int("ext.min_input");
  e.bn_batch_stats = cfg.get_bool("ext.bn_batch_stats");
  return e;
}

SceneModel SceneModel::create(const Config& cfg) {
  SceneModel m;
  m.cfg = cfg;
  m.seed = static_cast<uint64_t>(cfg.get_int64("seed"));
  auto rng0 = make_rng(m.seed, Stream::param_init, 0);
  auto rng1 = make_rng(m.seed, Stream::param_init, 1);
  auto rng2 = make_rng(m.seed, Stream::param_init, 2);
  auto rng3 = make_rng(m.seed, Stream::param_init, 3);
  const BaseFieldConfig fc = base_field_config(cfg);
  m.coarse = BaseField<float>::create(fc, rng0);
  m.fine = BaseField<float>::create(fc, rng1);
  m.wm = WatermarkField<float>::create(watermark_field_config(cfg), rng2);
  m.extractor = MessageExtractor<float>::create(extractor_config(cfg), rng3);
  m.base_opt.attach(m.base_params());
  m.wm_opt.attach(m.wm_params());
  return m;
}

nn::ParamList<float> SceneModel::base_params() {
  nn::ParamList<float> list;
  coarse.register_params(list, "coarse");
  fine.register_params(list, "fine");
  return list;
}

nn::ParamList<float> SceneModel::wm_params() {
  nn::ParamList<float> list;
  wm.register_params(list, "wm");
  extractor.register_params(list, "ext");
  return list;
}

nn::ParamList<float> SceneModel::all_params() {
  nn::ParamList<float> list;
  coarse.register_params(list, "coarse");
  fine.register_params(list, "fine");
  wm.register_params(list, "wm");
  extractor.register_params(list, "ext");
  return list;
}

uint64_t SceneModel::base_param_hash() const {
  auto& self = const_cast<SceneModel&>(*this);
  nn::ParamList<float> list = self.base_params();
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (size_t i = 0; i < list.size(); ++i) {
    mix(list.names[i].data(), list.names[i].size());
    mix(list.mats[i]->data(), sizeof(float) * static_cast<size_t>(list.mats[i]->size()));
  }
  return h;
}

Checkpoint SceneModel::to_checkpoint() const {
  auto& self = const_cast<SceneModel&>(*this);
  Checkpoint ck;
  ck.seed = seed;
  ck.counters["base_step"] = base_step;
  ck.counters["wm_step"] = wm_step;
  ck.counters["base_opt_t"] = static_cast<uint64_t>(self.base_opt.step_count());
  ck.counters["wm_opt_t"] = static_cast<uint64_t>(self.wm_opt.step_count());
  ck.config_snapshot = cfg.snapshot();
  nn::ParamList<float> params = self.all_params();
  for (size_t i = 0; i < params.size(); ++i) ck.add_block(params.names[i], *params.mats[i]);
  nn::ParamList<float> stats;
  self.extractor.register_stats(stats, "ext");
  for (size_t i = 0; i < stats.size(); ++i) ck.add_block("stats." + stats.names[i], *stats.mats[i]);
  auto dump_opt = [&ck](nn::Adam<float>& opt, const nn::ParamList<float>& list,
                        const std::string& prefix) {
    for (size_t i = 0; i < list.size(); ++i) {
      ck.add_block(prefix + ".m." + list.names[i], opt.moment1()[i]);
      ck.add_block(prefix + ".v." + list.names[i], opt.moment2()[i]);
    }
  };
  dump_opt(self.base_opt, self.base_params(), "opt.base");
  dump_opt(self.wm_opt, self.wm_params(), "opt.wm");
  return ck;
}

SceneModel SceneModel::from_checkpoint(const Checkpoint& ck) {
  SceneModel m = create(Config::from_snapshot(ck.config_snapshot));
  m.seed = ck.seed;
  m.base_step = ck.counter("base_step");
  m.wm_step = ck.counter("wm_step");
  auto load_list = [&ck](nn::ParamList<float>& list, const std::string& prefix) {
    for (size_t i = 0; i < list.size(); ++i) {
      const Eigen::MatrixXf* b = ck.find(prefix + list.names[i]);
      if (b == nullptr) throw std::runtime_error("checkpoint: missing block " + list.names[i]);
      if (b->rows() != list.mats[i]->rows() || b->cols() != list.mats[i]->cols())
        throw std::runtime_error("checkpoint: shape mismatch for block " + list.names[i]);
      *list.mats[i] = *b;
    }
  };
  nn::ParamList<float> params = m.all_params();
  load_list(params, "");
  nn::ParamList<float> stats;
  m.extractor.register_stats(stats, "ext");
  load_list(stats, "stats.");
  auto load_opt = [&ck](nn::Adam<float>& opt, const nn::ParamList<float>& list,
                        const std::string& prefix, uint64_t t) {
    opt.attach(list);
    opt.set_step_count(static_cast<long>(t));
    for (size_t i = 0; i < list.size(); ++i) {
      const Eigen::MatrixXf* bm = ck.find(prefix + ".m." + list.names[i]);
      const Eigen::MatrixXf* bv = ck.find(prefix + ".v." + list.names[i]);
      if (bm != nullptr) opt.moment1()[i] = *bm;
      if (bv != nullptr) opt.moment2()[i] = *bv;
    }
  };
  load_opt(m.base_opt, m.base_params(), "opt.base", ck.counter("base_opt_t"));
  load_opt(m.wm_opt, m.wm_params(), "opt.wm", ck.counter("wm_opt_t"));
  return m;
}

void SceneModel::perturb_model_weights(double std, uint64_t noise_seed) {
  if (std < 0) throw std::invalid_argument("perturb: std must be >= 0");
  if (std == 0) return;
  auto rng = make_rng(noise_seed, Stream::attack);
  std::normal_distribution<double> gauss(0.0, std);
  nn::ParamList<float> list;
  coarse.register_params(list, "coarse");
  fine.register_params(list, "fine");
  wm.register_params(list, "wm");
  for (auto* m : list.mats)
    for (Eigen::Index i = 0; i < m->size(); ++i) (*m)(i) += static_cast<float>(gauss(rng));
}

namespace {

// Renders one chunk of pixel coordinates, returning the 3 x N planar colors.
void render_chunk(const SceneModel& model, const CameraModel& cam, double t_near, double t_far,
                  const SamplingPreset& preset, const Message* message, uint64_t tag,
                  const std::vector<PixelCoord>& coords, Eigen::MatrixXf& base_out,
                  Eigen::MatrixXf& wm_out) {
  ad::Tape<float> t;
  auto coarse_vars = model.coarse.vars(t, false);
  auto fine_vars = model.fine.vars(t, false);
  RenderRequest req;
  req.preset = preset;
  req.jitter = false;
  req.randomize = false;
  req.seed = model.seed;
  req.tag = tag;
  const double n_total = std::max(1, preset.total());
  req.beta = model.cfg.get_double("render.beta_factor") * (t_far - t_near) / n_total;
  auto rays = RayBatch<float>::from_camera(cam, coords, t_near, t_far);
  if (message != nullptr) {
    auto wm_vars = model.wm.vars(t, false);
    typename ad::Tape<float>::Var msg_block = model.wm.fusion_message_block(t, wm_vars, *message);
    auto out = render_rays<float>(t, model.coarse, coarse_vars, model.fine, fine_vars, &model.wm,
                                  &wm_vars, msg_block, rays, req);
    base_out = t.val(out.base);
    wm_out = t.val(out.wm);
  } else {
    auto out = render_rays<float>(t, model.coarse, coarse_vars, model.fine, fine_vars, nullptr,
                                  nullptr, {}, rays, req);
    base_out = t.val(out.base);
    wm_out = base_out;
  }
}

ViewRender render_coords(const SceneModel& model, const CameraModel& cam, double t_near,
                         double t_far, const SamplingPreset& preset, const Message* message,
                         uint64_t tag, const std::vector<PixelCoord>& coords, int out_w,
                         int out_h) {
  const int chunk = std::max(64, model.cfg.get_int("render.chunk"));
  const int n = static_cast<int>(coords.size());
  const int n_chunks = (n + chunk - 1) / chunk;
  Eigen::MatrixXf base(3, n), wm(3, n);
#pragma omp parallel for schedule(dynamic)
  for (int ci = 0; ci < n_chunks; ++ci) {
    const int lo = ci * chunk;
    const int len = std::min(chunk, n - lo);
    std::vector<PixelCoord> sub(coords.begin() + lo, coords.begin() + lo + len);
    Eigen::MatrixXf cb, cw;
    render_chunk(model, cam, t_near, t_far, preset, message, tag, sub, cb, cw);
    base.middleCols(lo, len) = cb;
    wm.middleCols(lo, len) = cw;
  }
  ViewRender out;
  out.base = ImageRGB::from_planar(base, out_w, out_h);
  out.wm = ImageRGB::from_planar(wm, out_w, out_h);
  return out;
}

}  // namespace

ViewRender render_view(const SceneModel& model, const CameraModel& cam, double t_near,
                       double t_far, const SamplingPreset& preset, const Message* message,
                       uint64_t tag) {
  std::vector<PixelCoord> coords;
  coords.reserve(static_cast<size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) coords.push_back({x, y});
  return render_coords(model, cam, t_near, t_far, preset, message, tag, coords, cam.width,
                       cam.height);
}

ViewRender render_patch_image(const SceneModel& model, const CameraModel& cam, double t_near,
                              double t_far, const PatchSpec& patch, const SamplingPreset& preset,
                              const Message* message, uint64_t tag) {
  patch.validate(cam.width, cam.height);
  return render_coords(model, cam, t_near, t_far, preset, message, tag, patch.coords(), patch.size,
                       patch.size);
}

Eigen::MatrixXf extract_from_image(const SceneModel& model, const ImageRGB& img) {
  return model.extractor.extract(img.to_planar(), img.width, img.height);
}

}  // namespace nerfmark
