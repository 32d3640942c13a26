// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nerfmark/evaluation.hpp"
#include "nerfmark/scene_gen.hpp"
#include "nerfmark/training.hpp"

using namespace nerfmark;
namespace fs = std::filesystem;

namespace {

// Tiny end-to-end setup: 16x16 scene, 2-layer fields, 4+4 samples.
Config tiny_config() {
  Config cfg;
  cfg.set("seed", "7");
  cfg.set("scene.size", "16");
  cfg.set("enc.pos_freqs", "4");
  cfg.set("enc.dir_freqs", "2");
  cfg.set("field.preset", "custom");
  cfg.set("field.layers", "2");
  cfg.set("field.width", "24");
  cfg.set("field.z_width", "16");
  cfg.set("field.color_hidden", "16");
  cfg.set("wm.nc", "16");
  cfg.set("wm.e_hidden", "16");
  cfg.set("wm.g_hidden", "16");
  cfg.set("ext.widths", "8,12");
  cfg.set("ext.head_hidden", "16");
  cfg.set("ext.min_input", "4");
  cfg.set("render.n_coarse", "4");
  cfg.set("render.n_fine", "4");
  cfg.set("render.chunk", "256");
  cfg.set("train.base_rays", "96");
  cfg.set("train.base_steps", "60");
  cfg.set("train.wm_steps", "220");
  cfg.set("train.patch_sizes", "8,12");
  cfg.set("train.eval_interval", "1000000");  // keep mid-training evals out of timing
  cfg.set("train.log_interval", "50");
  cfg.set("eval.views", "1");
  return cfg;
}

const std::string& scene_dir() {
  static std::string dir = [] {
    fs::path p = fs::temp_directory_path() / "nerfmark_pipeline_scene";
    fs::remove_all(p);
    generate_scene_dataset(p.string(), 2, 1, 16, 2);
    return p.string();
  }();
  return dir;
}

}  // namespace

TEST_CASE("training: zero steps leave parameters untouched") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  const uint64_t h_before = model.base_param_hash();
  StageStats stats = train_base_stage(model, data, 0, nullptr);
  CHECK(stats.steps_run == 0);
  CHECK(model.base_param_hash() == h_before);
}

TEST_CASE("training: identical seeds give identical loss trajectories") {
  Dataset data = load_dataset(scene_dir());
  SceneModel a = SceneModel::create(tiny_config());
  SceneModel b = SceneModel::create(tiny_config());
  StageStats sa = train_base_stage(a, data, 20, nullptr);
  StageStats sb = train_base_stage(b, data, 20, nullptr);
  CHECK(sa.last_window_median_loss == sb.last_window_median_loss);
  CHECK(a.base_param_hash() == b.base_param_hash());
}

TEST_CASE("training: checkpoint resume reproduces an uninterrupted run bit-exactly") {
  Dataset data = load_dataset(scene_dir());

  SceneModel full = SceneModel::create(tiny_config());
  train_base_stage(full, data, 7, nullptr);

  SceneModel split = SceneModel::create(tiny_config());
  train_base_stage(split, data, 6, nullptr);
  Checkpoint mid = split.to_checkpoint();
  SceneModel resumed = SceneModel::from_checkpoint(mid);
  train_base_stage(resumed, data, 1, nullptr);

  CHECK(resumed.base_param_hash() == full.base_param_hash());
  CHECK(resumed.to_checkpoint().content_hash() == full.to_checkpoint().content_hash());
}

TEST_CASE("training: watermark stage keeps base parameters bit-identical and geometry unchanged") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  train_base_stage(model, data, 25, nullptr);
  const uint64_t base_hash = model.base_param_hash();
  auto [s_before, z_before] = model.fine.query_geometry(Eigen::Vector3f(0.2f, -0.1f, 0.4f));

  train_watermark_stage(model, data, 30, nullptr);
  CHECK(model.base_param_hash() == base_hash);
  auto [s_after, z_after] = model.fine.query_geometry(Eigen::Vector3f(0.2f, -0.1f, 0.4f));
  CHECK(s_before == s_after);  // bit-identical geometry queries
  CHECK((z_before - z_after).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("training: one watermark step sends gradient into every sub-network") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  train_base_stage(model, data, 10, nullptr);
  train_watermark_stage(model, data, 1, nullptr);
  // First Adam moments are (1-beta1) * grad: non-zero iff gradient reached
  // the block. Covers E, D, G and the extractor.
  nn::ParamList<float> params = model.wm_params();
  auto& m1 = model.wm_opt.moment1();
  REQUIRE(m1.size() == params.size());
  int zero_blocks = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    if (m1[i].cwiseAbs().sum() == 0.0f) {
      ++zero_blocks;
      MESSAGE("zero gradient block: ", params.names[i]);
    }
  }
  CHECK(zero_blocks == 0);
}

TEST_CASE("training: losses trend downward (median of last tenth vs first tenth)") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  StageStats base = train_base_stage(model, data, 60, nullptr);
  CHECK(base.last_window_median_loss < base.first_window_median_loss);
  StageStats wm = train_watermark_stage(model, data, 220, nullptr);
  CHECK(wm.last_window_median_loss < wm.first_window_median_loss);
  CHECK(wm.final_metric > 0.5);  // training-patch bit accuracy above chance
}

TEST_CASE("training: divergence aborts with a diagnostic") {
  Dataset data = load_dataset(scene_dir());
  Config cfg = tiny_config();
  cfg.set("train.lr", "1e6");  // guaranteed blow-up
  SceneModel model = SceneModel::create(cfg);
  CHECK_THROWS_WITH_AS(train_base_stage(model, data, 50, nullptr),
                       doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("evaluation: report aggregates are recomputable from the per-view rows") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  train_base_stage(model, data, 10, nullptr);
  std::vector<Message> msgs{Message::from_bitstring("0110"), Message::from_bitstring("1001")};
  SamplingPreset preset = SamplingPreset::parse("4asp+4isp");
  EvalReport report = evaluate_views(model, data, msgs, 1, preset,
                                     standard_conditions(model.cfg), model.seed);
  CHECK(report.untrained_warning);  // watermark stage never ran

  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& row : report.rows) {
    acc[row.condition].first += row.accuracy;
    acc[row.condition].second += 1;
  }
  for (const auto& [name, stat] : acc)
    CHECK(report.accuracy_by_condition.at(name) ==
          doctest::Approx(stat.first / stat.second).epsilon(1e-12));
  CHECK(report.rows.size() == msgs.size() * 1 * 5);  // clean + 4 distortions
}

TEST_CASE("evaluation: report JSONL dump includes summary and per-view records") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  std::vector<Message> msgs{Message::from_bitstring("0110")};
  EvalReport report = evaluate_views(model, data, msgs, 1, SamplingPreset::parse("4asp"), {},
                                     model.seed);
  const std::string path =
      (fs::temp_directory_path() / "nerfmark_report_test.jsonl").string();
  report.dump_jsonl(path, model.cfg.snapshot());
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1 + static_cast<int>(report.rows.size()));
}

TEST_CASE("evaluation: degenerate single-point preset runs without crashing") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  std::vector<Message> msgs{Message::from_bitstring("0101")};
  auto rows = sampling_robustness_suite(model, data, msgs, 1,
                                        {SamplingPreset::parse("1asp")}, model.seed);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].second >= 0.0);
  CHECK(rows[0].second <= 1.0);
}

TEST_CASE("evaluation: zero-std weight attack equals clean accuracy") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  train_base_stage(model, data, 10, nullptr);
  std::vector<Message> msgs{Message::from_bitstring("0110")};
  SamplingPreset preset = SamplingPreset::parse("4asp+4isp");
  EvalReport clean = evaluate_views(model, data, msgs, 1, preset, {}, model.seed);
  const double attacked =
      weight_perturbation_attack(model, 0.0, msgs, data, 1, preset, model.seed, 99);
  CHECK(attacked == doctest::Approx(clean.clean_accuracy));
}

TEST_CASE("evaluation: ablation suite trains and reports one entry per toggle") {
  Dataset data = load_dataset(scene_dir());
  SceneModel model = SceneModel::create(tiny_config());
  train_base_stage(model, data, 10, nullptr);
  std::vector<Message> msgs{Message::from_bitstring("0110")};
  auto results = ablation_suite(model, data, {"full", "wo_mff", "wo_cff", "wo_drr", "drs"}, 3,
                                msgs, 1, model.seed);
  REQUIRE(results.size() == 5);
  CHECK(results[0].name == "full");
  for (const auto& r : results) {
    CHECK(r.report.rows.size() == 1);
    CHECK(r.report.clean_accuracy >= 0.0);
    CHECK_FALSE(r.report.untrained_warning);
  }
}
