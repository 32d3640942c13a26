// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "nerfmark/checkpoint.hpp"
#include "nerfmark/config.hpp"
#include "nerfmark/dataset.hpp"
#include "nerfmark/model.hpp"
#include "nerfmark/scene_gen.hpp"

using namespace nerfmark;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("nerfmark_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Config small_config() {
  Config cfg;
  cfg.set("enc.pos_freqs", "2");
  cfg.set("enc.dir_freqs", "2");
  cfg.set("field.preset", "custom");
  cfg.set("field.layers", "2");
  cfg.set("field.width", "16");
  cfg.set("field.z_width", "16");
  cfg.set("field.color_hidden", "16");
  cfg.set("wm.nc", "8");
  cfg.set("wm.e_hidden", "8");
  cfg.set("wm.g_hidden", "8");
  cfg.set("ext.widths", "4,8");
  cfg.set("ext.head_hidden", "8");
  return cfg;
}

}  // namespace

TEST_CASE("dataset: generated scene loads with matching sizes and cameras") {
  const fs::path dir = temp_dir("scene_roundtrip");
  GeneratedScene gen = generate_scene_dataset(dir.string(), 8, 2, 32, 1);
  Dataset data = load_dataset(dir.string());
  CHECK(data.train.size() == 8);
  CHECK(data.test.size() == 2);
  CHECK(data.t_near == doctest::Approx(2.0));
  CHECK(data.t_far == doctest::Approx(6.0));
  for (size_t i = 0; i < data.train.size(); ++i) {
    CHECK(data.train[i].rgb.width == 32);
    CHECK(data.train[i].rgb.height == 32);
    // Loader cameras must round-trip the generator's ground-truth matrices.
    const Eigen::Matrix4d a = gen.train_cameras[i].camera_to_world();
    const Eigen::Matrix4d b = data.train[i].camera.camera_to_world();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(data.train[i].camera.focal == doctest::Approx(gen.train_cameras[i].focal).epsilon(1e-9));
  }
}

TEST_CASE("dataset: loading twice yields identical tensors") {
  const fs::path dir = temp_dir("scene_twice");
  generate_scene_dataset(dir.string(), 2, 1, 16, 1);
  Dataset a = load_dataset(dir.string());
  Dataset b = load_dataset(dir.string());
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].rgb.data == b.train[i].rgb.data);
}

TEST_CASE("dataset: pixel values stay inside [0,1] and cameras orthonormal") {
  const fs::path dir = temp_dir("scene_valid");
  generate_scene_dataset(dir.string(), 3, 1, 16, 2);
  Dataset data = load_dataset(dir.string());
  CHECK_NOTHROW(data.validate());
}

TEST_CASE("dataset: improper rotation (det -1) is rejected naming the frame") {
  const fs::path dir = temp_dir("scene_detneg");
  generate_scene_dataset(dir.string(), 2, 1, 16, 1);
  // Flip one axis in the first train frame.
  const fs::path manifest = dir / "transforms_train.json";
  nlohmann::json j;
  {
    std::ifstream in(manifest);
    in >> j;
  }
  for (int r = 0; r < 3; ++r) {
    const double v = j["frames"][0]["transform_matrix"][r][0].get<double>();
    j["frames"][0]["transform_matrix"][r][0] = -v;
  }
  {
    std::ofstream out(manifest);
    out << j.dump();
  }
  CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("determinant"),
                       std::runtime_error);
}

TEST_CASE("dataset: missing manifest is a fatal load error") {
  const fs::path dir = temp_dir("scene_missing");
  fs::create_directories(dir);
  CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("missing manifest"),
                       std::runtime_error);
}

TEST_CASE("dataset: manifest without near/far is rejected") {
  const fs::path dir = temp_dir("scene_nonear");
  generate_scene_dataset(dir.string(), 2, 1, 16, 1);
  const fs::path manifest = dir / "transforms_train.json";
  nlohmann::json j;
  {
    std::ifstream in(manifest);
    in >> j;
  }
  j.erase("near");
  {
    std::ofstream out(manifest);
    out << j.dump();
  }
  CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("near/far"),
                       std::runtime_error);
}

TEST_CASE("dataset: image/manifest dimension mismatch is a validation error") {
  const fs::path dir = temp_dir("scene_dims");
  generate_scene_dataset(dir.string(), 2, 1, 16, 1);
  const fs::path manifest = dir / "transforms_train.json";
  nlohmann::json j;
  {
    std::ifstream in(manifest);
    in >> j;
  }
  j["width"] = 999;
  {
    std::ofstream out(manifest);
    out << j.dump();
  }
  CHECK_THROWS_WITH_AS(load_dataset(dir.string()), doctest::Contains("width"),
                       std::runtime_error);
}

TEST_CASE("checkpoint: save/load round-trips every parameter bit-exactly") {
  const fs::path dir = temp_dir("ckpt");
  SceneModel model = SceneModel::create(small_config());
  Checkpoint ck = model.to_checkpoint();
  const std::string path = (dir / "m.ckpt").string();
  ck.save(path);
  Checkpoint back = Checkpoint::load(path);
  REQUIRE(back.blocks.size() == ck.blocks.size());
  for (size_t i = 0; i < ck.blocks.size(); ++i) {
    CHECK(back.blocks[i].first == ck.blocks[i].first);
    CHECK(back.blocks[i].second.rows() == ck.blocks[i].second.rows());
    // Bit-exact: compare raw float payloads.
    CHECK(std::memcmp(back.blocks[i].second.data(), ck.blocks[i].second.data(),
                      sizeof(float) * ck.blocks[i].second.size()) == 0);
  }
  CHECK(back.content_hash() == ck.content_hash());
  CHECK(back.config_snapshot == ck.config_snapshot);

  SceneModel restored = SceneModel::from_checkpoint(back);
  CHECK(restored.base_param_hash() == model.base_param_hash());
}

TEST_CASE("checkpoint: refuses to overwrite without force") {
  const fs::path dir = temp_dir("ckpt_force");
  SceneModel model = SceneModel::create(small_config());
  const std::string path = (dir / "m.ckpt").string();
  model.to_checkpoint().save(path);
  CHECK_THROWS_AS(model.to_checkpoint().save(path), std::runtime_error);
  CHECK_NOTHROW(model.to_checkpoint().save(path, /*overwrite=*/true));
}

TEST_CASE("checkpoint: truncated file errors out without partial state") {
  const fs::path dir = temp_dir("ckpt_trunc");
  SceneModel model = SceneModel::create(small_config());
  const std::string path = (dir / "m.ckpt").string();
  model.to_checkpoint().save(path);
  const auto full_size = fs::file_size(path);
  fs::resize_file(path, full_size / 2);
  CHECK_THROWS_WITH_AS(Checkpoint::load(path), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("checkpoint: version mismatch is rejected") {
  const fs::path dir = temp_dir("ckpt_version");
  SceneModel model = SceneModel::create(small_config());
  const std::string path = (dir / "m.ckpt").string();
  model.to_checkpoint().save(path);
  // Patch the version field (bytes 4..7).
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4);
  const uint32_t bad = 999;
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  CHECK_THROWS_WITH_AS(Checkpoint::load(path), doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("config: precedence, snapshot round-trip, unknown keys") {
  Config cfg;
  CHECK(cfg.get_int("train.nb") == 4);
  cfg.apply_override("train.nb=8");
  CHECK(cfg.get_int("train.nb") == 8);
  CHECK_THROWS_AS(cfg.apply_override("no.such.key=1"), std::runtime_error);
  Config back = Config::from_snapshot(cfg.snapshot());
  CHECK(back.get_int("train.nb") == 8);
  CHECK(back.snapshot() == cfg.snapshot());
}
