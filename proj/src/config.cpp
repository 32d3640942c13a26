// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nerfmark {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config::Config() {
  // Scene generation.
  values_["scene.size"] = "64";
  values_["scene.train_views"] = "8";
  values_["scene.test_views"] = "4";
  values_["scene.supersample"] = "3";

  // Frequency encodings (reference defaults; the source papers for this
  // construction leave them implicit).
  values_["enc.pos_freqs"] = "10";
  values_["enc.dir_freqs"] = "4";
  values_["enc.include_input"] = "1";

  // Base field. preset desk: 4x64 trunk, z width 64, no skip.
  // preset paper: 8x256 trunk, z width 256, skip at layer 4.
  values_["field.preset"] = "desk";
  values_["field.layers"] = "4";
  values_["field.width"] = "64";
  values_["field.z_width"] = "64";
  values_["field.skip_layer"] = "-1";
  values_["field.color_hidden"] = "64";

  // Watermark field.
  values_["wm.nc"] = "64";
  values_["wm.nm"] = "256";
  values_["wm.e_hidden"] = "64";
  values_["wm.g_hidden"] = "64";
  values_["wm.delta_scale"] = "1.0";
  values_["wm.use_cff"] = "1";
  values_["wm.use_mff"] = "1";

  // Message extractor.
  values_["ext.widths"] = "32,64";
  values_["ext.min_input"] = "8";
  values_["ext.head_hidden"] = "64";
  values_["ext.bn_batch_stats"] = "0";

  // Rendering / sampling.
  values_["render.n_coarse"] = "32";
  values_["render.n_fine"] = "32";
  values_["render.beta_factor"] = "0.5";  // beta = factor * (far-near)/n_samples
  values_["render.chunk"] = "2048";
  values_["render.preset"] = "32asp+32isp";

  // Training.
  values_["train.nb"] = "4";
  values_["train.base_steps"] = "900";
  values_["train.wm_steps"] = "900";
  values_["train.base_rays"] = "512";
  values_["train.lr"] = "5e-4";
  values_["train.lr_decay"] = "0.1";  // total decay factor over a stage
  values_["train.adam_beta1"] = "0.9";
  values_["train.adam_beta2"] = "0.999";
  values_["train.adam_eps"] = "1e-8";
  values_["train.lambda"] = "0.01";
  values_["train.gamma1"] = "1.0";
  values_["train.gamma2"] = "5.0";
  values_["train.patch_sizes"] = "32,48,64";
  values_["train.use_distortions"] = "1";
  values_["train.use_random_sampling"] = "1";
  values_["train.distortions"] = "identity,noise,rotation,scaling,blur";
  values_["train.noise_mean"] = "0.0";
  values_["train.noise_std_max"] = "0.1";
  values_["train.rot_max"] = "0.5235987755982988";  // pi/6
  values_["train.scale_min"] = "0.75";
  values_["train.scale_max"] = "1.25";
  values_["train.blur_sigma_max"] = "1.0";
  values_["train.eval_interval"] = "150";
  values_["train.log_interval"] = "25";

  // Evaluation.
  values_["eval.views"] = "20";
  values_["eval.noise_std"] = "0.1";
  values_["eval.rot_max"] = "0.5235987755982988";
  values_["eval.scale_min"] = "0.75";
  values_["eval.scale_max"] = "1.25";
  values_["eval.blur_sigma"] = "0.1";

  values_["seed"] = "1";
}

Config Config::from_file(const std::string& path) {
  Config c;
  c.apply_file(path);
  return c;
}

void Config::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at " + path + ":" + std::to_string(lineno));
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void Config::apply_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw std::runtime_error("override must be key=value: " + kv);
  set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end() && !allow_unknown_)
    throw std::runtime_error("config: unknown key '" + key + "'");
  values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::logic_error&) {
    throw std::runtime_error("config: key '" + key + "' is not a number");
  }
}

int Config::get_int(const std::string& key) const {
  return static_cast<int>(get_int64(key));
}

int64_t Config::get_int64(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::logic_error&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::runtime_error("config: key '" + key + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : get_list(key)) out.push_back(std::stoi(s));
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) out.push_back(std::stod(s));
  return out;
}

std::string Config::snapshot() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

Config Config::from_snapshot(const std::string& text) {
  Config c;
  c.allow_unknown_ = true;  // snapshots from newer versions may carry extra keys
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) continue;
    c.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  c.allow_unknown_ = false;
  return c;
}

}  // namespace nerfmark
