// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nerfmark/evaluation.hpp"
#include "nerfmark/scene_gen.hpp"
#include "nerfmark/training.hpp"

namespace nerfmark {

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> overrides;
  int64_t seed = -1;  // -1: not set on the command line
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "config file (key=value lines)");
  cmd->add_option("--set", opts.overrides, "config override key=value (repeatable)");
  cmd->add_option("--seed", opts.seed, "RNG seed (overrides config and SEED env)");
}

// Precedence: defaults < file < SEED env < --set < --seed.
void apply_common(Config& cfg, const CommonOpts& opts) {
  if (!opts.config_file.empty()) cfg.apply_file(opts.config_file);
  if (const char* env = std::getenv("SEED"); env != nullptr && *env != '\0')
    cfg.set("seed", env);
  for (const auto& kv : opts.overrides) cfg.apply_override(kv);
  if (opts.seed >= 0) cfg.set("seed", std::to_string(opts.seed));
}

Message parse_message_opt(const std::string& bits, const std::string& hex, int n_bits) {
  if (!bits.empty()) return Message::from_bitstring(bits);
  if (!hex.empty()) return Message::from_hex(hex, n_bits);
  throw std::runtime_error("a message is required (--message or --message-hex)");
}

std::vector<Message> build_message_set(const std::string& spec, int n_bits, uint64_t seed) {
  std::vector<Message> out;
  if (spec == "all") {
    if (n_bits > 16) throw std::runtime_error("--messages all is limited to <= 16 bits");
    for (uint64_t i = 0; i < (uint64_t(1) << n_bits); ++i)
      out.push_back(Message::from_index(i, n_bits));
    return out;
  }
  const int count = std::stoi(spec);
  if (count < 1) throw std::runtime_error("--messages must be 'all' or a positive count");
  auto rng = make_rng(seed, Stream::eval, 0x9e55a6e5);
  for (int i = 0; i < count; ++i) out.push_back(sample_training_message(rng, n_bits));
  return out;
}

SceneModel load_model(const std::string& ckpt_path, const CommonOpts& opts) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  SceneModel model = SceneModel::from_checkpoint(ck);
  // Evaluation-side keys may be overridden after load; the architecture is
  // already built from the snapshot.
  if (!opts.config_file.empty()) model.cfg.apply_file(opts.config_file);
  for (const auto& kv : opts.overrides) model.cfg.apply_override(kv);
  return model;
}

CameraModel camera_from_matrix_file(const std::string& path, int width, int height) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pose file " + path);
  nlohmann::json j;
  in >> j;
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = j.at("transform_matrix").at(r).at(c).get<double>();
  const double angle_x = j.at("camera_angle_x").get<double>();
  const double focal = 0.5 * width / std::tan(0.5 * angle_x);
  CameraModel cam = CameraModel::from_matrix(m, focal, width, height);
  cam.validate("pose file");
  return cam;
}

CameraModel rescale_camera(const CameraModel& cam, int width, int height) {
  if (width == cam.width && height == cam.height) return cam;
  CameraModel out = cam;
  const double sx = static_cast<double>(width) / cam.width;
  const double sy = static_cast<double>(height) / cam.height;
  out.focal = cam.focal * sx;
  out.cx = cam.cx * sx;
  out.cy = cam.cy * sy;
  out.width = width;
  out.height = height;
  return out;
}

EvalCondition parse_condition(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw std::runtime_error("--distortion expects kind=param");
  const std::string kind = kv.substr(0, eq);
  const double param = std::stod(kv.substr(eq + 1));
  EvalCondition c;
  c.name = kind;
  c.kind = distortion_kind_from_string(kind);
  switch (c.kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_noise: c.noise_std = param; break;
    case DistortionKind::rotation: c.rot_max = param; break;  // drawn in +-param
    case DistortionKind::scaling: c.scale_min = c.scale_max = param; break;
    case DistortionKind::gaussian_blur: c.blur_sigma = param; break;
  }
  return c;
}

int cmd_gen_scene(const std::string& out_dir, int train_views, int test_views,
                  const CommonOpts& opts) {
  Config cfg;
  apply_common(cfg, opts);
  if (train_views > 0) cfg.set("scene.train_views", std::to_string(train_views));
  if (test_views > 0) cfg.set("scene.test_views", std::to_string(test_views));
  generate_scene_dataset(out_dir, cfg.get_int("scene.train_views"),
                         cfg.get_int("scene.test_views"), cfg.get_int("scene.size"),
                         cfg.get_int("scene.supersample"));
  std::cout << "scene written to " << out_dir << " (" << cfg.get("scene.train_views")
            << " train / " << cfg.get("scene.test_views") << " test views, "
            << cfg.get("scene.size") << "px)\n";
  return 0;
}

int cmd_train_base(const std::string& data_dir, const std::string& out_path,
                   const std::string& resume, int64_t steps, const std::string& log_path,
                   bool force, const CommonOpts& opts) {
  Dataset data = load_dataset(data_dir);
  SceneModel model = [&] {
    if (!resume.empty()) {
      SceneModel m = load_model(resume, opts);
      return m;
    }
    Config cfg;
    apply_common(cfg, opts);
    return SceneModel::create(cfg);
  }();
  const uint64_t n = steps >= 0 ? static_cast<uint64_t>(steps)
                                : static_cast<uint64_t>(model.cfg.get_int64("train.base_steps"));
  JsonlLogger log(log_path);
  StageStats stats = train_base_stage(model, data, n, log.active() ? &log : nullptr);
  model.to_checkpoint().save(out_path, force);
  std::cout << "base stage: " << stats.steps_run << " steps, holdout PSNR "
            << stats.final_metric << " dB -> " << out_path << "\n";
  return 0;
}

int cmd_train_watermark(const std::string& data_dir, const std::string& base_path,
                        const std::string& out_path, const std::string& resume, int64_t steps,
                        const std::string& log_path, int message_length, bool force,
                        const CommonOpts& opts) {
  Dataset data = load_dataset(data_dir);
  SceneModel model = [&] {
    if (!resume.empty()) return load_model(resume, opts);
    Checkpoint base_ck = Checkpoint::load(base_path);
    Config cfg = Config::from_snapshot(base_ck.config_snapshot);
    apply_common(cfg, opts);
    if (message_length > 0) cfg.set("train.nb", std::to_string(message_length));
    SceneModel m = SceneModel::create(cfg);
    // Adopt the trained base blocks; watermark blocks start fresh.
    SceneModel base_model = SceneModel::from_checkpoint(base_ck);
    nn::ParamList<float> from = base_model.base_params();
    nn::ParamList<float> to = m.base_params();
    for (size_t i = 0; i < from.size(); ++i) *to.mats[i] = *from.mats[i];
    m.base_step = base_model.base_step;
    return m;
  }();
  if (model.base_step == 0)
    std::cerr << "warning: base field looks untrained (step counter is 0)\n";
  const uint64_t n = steps >= 0 ? static_cast<uint64_t>(steps)
                                : static_cast<uint64_t>(model.cfg.get_int64("train.wm_steps"));
  const uint64_t base_hash_before = model.base_param_hash();
  JsonlLogger log(log_path);
  StageStats stats = train_watermark_stage(model, data, n, log.active() ? &log : nullptr);
  if (model.base_param_hash() != base_hash_before)
    throw std::runtime_error("internal error: base parameters changed during watermark stage");
  model.to_checkpoint().save(out_path, force);
  std::cout << "watermark stage: " << stats.steps_run << " steps, training bit accuracy "
            << stats.final_metric << " -> " << out_path << "\n";
  return 0;
}

int cmd_render(const std::string& ckpt, const std::string& data_dir, int view_index,
               const std::string& split, const std::string& pose_file, int width, int height,
               const std::string& preset_str, const std::string& message_bits,
               const std::string& message_hex, const std::string& out_path,
               const CommonOpts& opts) {
  SceneModel model = load_model(ckpt, opts);
  double t_near = 0, t_far = 0;
  CameraModel cam;
  if (!pose_file.empty()) {
    const int w = width > 0 ? width : model.cfg.get_int("scene.size");
    const int h = height > 0 ? height : w;
    cam = camera_from_matrix_file(pose_file, w, h);
    t_near = 2.0;
    t_far = 6.0;
  } else {
    if (data_dir.empty()) throw std::runtime_error("render needs --data or --pose");
    Dataset data = load_dataset(data_dir);
    const auto& views = data.split(split);
    if (view_index < 0 || view_index >= static_cast<int>(views.size()))
      throw std::runtime_error("render: view index out of range");
    cam = views[view_index].camera;
    if (width > 0) cam = rescale_camera(cam, width, height > 0 ? height : width);
    t_near = data.t_near;
    t_far = data.t_far;
  }
  const SamplingPreset preset =
      SamplingPreset::parse(preset_str.empty() ? model.cfg.get("render.preset") : preset_str);
  std::optional<Message> msg;
  if (!message_bits.empty() || !message_hex.empty())
    msg = parse_message_opt(message_bits, message_hex, model.cfg.get_int("train.nb"));
  ViewRender r = render_view(model, cam, t_near, t_far, preset, msg ? &*msg : nullptr, 0);
  write_png(out_path, msg ? r.wm : r.base);
  std::cout << "rendered " << cam.width << "x" << cam.height << " view -> " << out_path << "\n";
  return 0;
}

int cmd_extract(const std::string& ckpt, const std::string& image_path, const CommonOpts& opts) {
  SceneModel model = load_model(ckpt, opts);
  ImageRGB img = read_png(image_path);
  Eigen::MatrixXf logits = extract_from_image(model, img);
  Message m = binarize(logits);
  std::cout << m.to_bitstring() << "\n";
  std::cout << "logits:";
  for (Eigen::Index i = 0; i < logits.size(); ++i) std::cout << " " << logits(i);
  std::cout << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data_dir,
                 const std::string& messages_spec, const std::string& fixed_message, int n_views,
                 const std::string& preset_str, const std::vector<std::string>& distortion_args,
                 const std::string& report_path, const std::string& suite,
                 const std::string& presets_list, const CommonOpts& opts) {
  SceneModel model = load_model(ckpt, opts);
  Dataset data = load_dataset(data_dir);
  const int n_bits = model.cfg.get_int("train.nb");
  const uint64_t eval_seed = model.seed;
  std::vector<Message> messages;
  if (!fixed_message.empty())
    messages.push_back(Message::from_bitstring(fixed_message));
  else
    messages = build_message_set(messages_spec, n_bits, eval_seed);
  const int views = n_views > 0 ? n_views : model.cfg.get_int("eval.views");
  const SamplingPreset preset =
      SamplingPreset::parse(preset_str.empty() ? model.cfg.get("render.preset") : preset_str);

  if (suite == "sampling") {
    std::vector<SamplingPreset> presets;
    std::stringstream ss(presets_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) presets.push_back(SamplingPreset::parse(tok));
    auto rows = sampling_robustness_suite(model, data, messages, views, presets, eval_seed);
    for (const auto& [name, acc] : rows)
      std::cout << "preset " << name << ": bit accuracy " << acc << "\n";
    if (!report_path.empty()) {
      std::ofstream out(report_path, std::ios::trunc);
      for (const auto& [name, acc] : rows)
        out << nlohmann::json{{"record", "preset"}, {"preset", name}, {"accuracy", acc}}.dump()
            << "\n";
    }
    return 0;
  }

  std::vector<EvalCondition> conditions;
  if (distortion_args.empty()) {
    conditions = standard_conditions(model.cfg);
  } else {
    conditions.push_back(EvalCondition{});  // clean is always reported
    for (const auto& arg : distortion_args) conditions.push_back(parse_condition(arg));
  }
  EvalReport report = evaluate_views(model, data, messages, views, preset, conditions, eval_seed);
  std::cout << report.table();
  if (!report_path.empty()) {
    report.dump_jsonl(report_path, model.cfg.snapshot());
    std::cout << "report -> " << report_path << "\n";
  }
  return 0;
}

int cmd_attack(const std::string& ckpt, const std::string& data_dir, double noise_std, int trials,
               const std::string& messages_spec, int n_views, const CommonOpts& opts) {
  SceneModel model = load_model(ckpt, opts);
  Dataset data = load_dataset(data_dir);
  const uint64_t eval_seed = model.seed;
  auto messages = build_message_set(messages_spec, model.cfg.get_int("train.nb"), eval_seed);
  const SamplingPreset preset = SamplingPreset::parse(model.cfg.get("render.preset"));
  const int views = n_views > 0 ? n_views : model.cfg.get_int("eval.views");
  std::vector<double> accs;
  for (int trial = 0; trial < trials; ++trial) {
    const double acc = weight_perturbation_attack(model, noise_std, messages, data, views, preset,
                                                  eval_seed, derive_seed(eval_seed, Stream::attack,
                                                                         trial));
    accs.push_back(acc);
    std::cout << "trial " << trial << " std " << noise_std << ": bit accuracy " << acc << "\n";
  }
  std::sort(accs.begin(), accs.end());
  std::cout << "median bit accuracy: " << accs[accs.size() / 2] << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"copyright watermarking for neural radiance fields"};
  app.require_subcommand(1);

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "generate the procedural test scene dataset");
  std::string gen_out;
  int gen_views = -1, gen_test_views = -1;
  CommonOpts gen_opts;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--views", gen_views, "number of training views");
  gen->add_option("--test-views", gen_test_views, "number of test views");
  add_common(gen, gen_opts);

  // train-base
  auto* tb = app.add_subcommand("train-base", "fit the base radiance fields");
  std::string tb_data, tb_out, tb_resume, tb_log;
  int64_t tb_steps = -1;
  bool tb_force = false;
  CommonOpts tb_opts;
  tb->add_option("--data", tb_data, "dataset directory")->required();
  tb->add_option("--out", tb_out, "output checkpoint (.ckpt)")->required();
  tb->add_option("--resume", tb_resume, "resume from checkpoint");
  tb->add_option("--steps", tb_steps, "steps to run (default: train.base_steps)");
  tb->add_option("--log", tb_log, "JSONL metric log path");
  tb->add_flag("--force", tb_force, "overwrite an existing checkpoint");
  add_common(tb, tb_opts);

  // train-watermark
  auto* tw = app.add_subcommand("train-watermark", "embed a message set on a frozen base");
  std::string tw_data, tw_base, tw_out, tw_resume, tw_log;
  int64_t tw_steps = -1;
  int tw_bits = -1;
  bool tw_force = false;
  CommonOpts tw_opts;
  tw->add_option("--data", tw_data, "dataset directory")->required();
  tw->add_option("--base", tw_base, "base-stage checkpoint");
  tw->add_option("--out", tw_out, "output checkpoint (.ckpt)")->required();
  tw->add_option("--resume", tw_resume, "resume a watermark checkpoint");
  tw->add_option("--steps", tw_steps, "steps to run (default: train.wm_steps)");
  tw->add_option("--message-length", tw_bits, "message length N_b (4/8/16/32/48)");
  tw->add_option("--log", tw_log, "JSONL metric log path");
  tw->add_flag("--force", tw_force, "overwrite an existing checkpoint");
  add_common(tw, tw_opts);

  // render
  auto* rd = app.add_subcommand("render", "render a view, optionally watermarked");
  std::string rd_ckpt, rd_data, rd_pose, rd_preset, rd_msg, rd_msg_hex, rd_out, rd_split = "test";
  int rd_view = 0, rd_w = -1, rd_h = -1;
  CommonOpts rd_opts;
  rd->add_option("--ckpt", rd_ckpt, "model checkpoint")->required();
  rd->add_option("--out", rd_out, "output PNG")->required();
  rd->add_option("--data", rd_data, "dataset directory (for --view-index)");
  rd->add_option("--view-index", rd_view, "pose index into the split");
  rd->add_option("--split", rd_split, "train or test (default test)");
  rd->add_option("--pose", rd_pose, "explicit pose JSON (camera_angle_x + transform_matrix)");
  rd->add_option("--width", rd_w, "output width (rescales intrinsics)");
  rd->add_option("--height", rd_h, "output height");
  rd->add_option("--preset", rd_preset, "sampling preset, e.g. 32asp+32isp, 64asp, 64rsp");
  rd->add_option("--message", rd_msg, "message bitstring, e.g. 0110");
  rd->add_option("--message-hex", rd_msg_hex, "message as hex (uses train.nb bits)");
  add_common(rd, rd_opts);

  // extract
  auto* ex = app.add_subcommand("extract", "recover the message from an image");
  std::string ex_ckpt, ex_image;
  CommonOpts ex_opts;
  ex->add_option("--ckpt", ex_ckpt, "model checkpoint")->required();
  ex->add_option("--image", ex_image, "input PNG")->required();
  add_common(ex, ex_opts);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "invisibility and robustness report");
  std::string ev_ckpt, ev_data, ev_messages = "all", ev_message, ev_preset, ev_report, ev_suite;
  std::string ev_presets = "32asp+32isp,64asp,16asp+48isp,64rsp";
  std::vector<std::string> ev_distortions;
  int ev_views = -1;
  CommonOpts ev_opts;
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--messages", ev_messages, "'all' (<=16 bits) or a count of random messages");
  ev->add_option("--message", ev_message, "evaluate one fixed bitstring");
  ev->add_option("--n-views", ev_views, "test views to render (default eval.views)");
  ev->add_option("--preset", ev_preset, "sampling preset");
  ev->add_option("--distortion", ev_distortions, "single-shot condition kind=param (repeatable)");
  ev->add_option("--report", ev_report, "JSONL report path (per-view bit dumps)");
  ev->add_option("--suite", ev_suite, "'sampling' for the rendering-strategy suite");
  ev->add_option("--presets", ev_presets, "comma list for --suite sampling");
  add_common(ev, ev_opts);

  // attack
  auto* at = app.add_subcommand("attack", "weight-perturbation attack");
  std::string at_ckpt, at_data, at_messages = "8";
  double at_std = 0.01;
  int at_trials = 5, at_views = -1;
  CommonOpts at_opts;
  at->add_option("--ckpt", at_ckpt, "model checkpoint")->required();
  at->add_option("--data", at_data, "dataset directory")->required();
  at->add_option("--std", at_std, "parameter noise std");
  at->add_option("--trials", at_trials, "independent noise draws");
  at->add_option("--messages", at_messages, "'all' or a count of random messages");
  at->add_option("--n-views", at_views, "test views");
  add_common(at, at_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_scene(gen_out, gen_views, gen_test_views, gen_opts);
    if (tb->parsed())
      return cmd_train_base(tb_data, tb_out, tb_resume, tb_steps, tb_log, tb_force, tb_opts);
    if (tw->parsed())
      return cmd_train_watermark(tw_data, tw_base, tw_out, tw_resume, tw_steps, tw_log, tw_bits,
                                 tw_force, tw_opts);
    if (rd->parsed())
      return cmd_render(rd_ckpt, rd_data, rd_view, rd_split, rd_pose, rd_w, rd_h, rd_preset,
                        rd_msg, rd_msg_hex, rd_out, rd_opts);
    if (ex->parsed()) return cmd_extract(ex_ckpt, ex_image, ex_opts);
    if (ev->parsed())
      return cmd_evaluate(ev_ckpt, ev_data, ev_messages, ev_message, ev_views, ev_preset,
                          ev_distortions, ev_report, ev_suite, ev_presets, ev_opts);
    if (at->parsed())
      return cmd_attack(at_ckpt, at_data, at_std, at_trials, at_messages, at_views, at_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace nerfmark
