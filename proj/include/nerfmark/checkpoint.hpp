// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace nerfmark {

// Single-file, versioned container of all learned state: parameter blocks,
// optimizer moments, batch-norm statistics, step counters, the RNG seed and
// a config snapshot. Round-trips are bit exact; loads either succeed fully
// or throw without producing partial state.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  uint64_t seed = 0;
  std::map<std::string, uint64_t> counters;  // e.g. base_step, wm_step, opt ticks
  std::string config_snapshot;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> blocks;

  void add_block(const std::string& name, const Eigen::MatrixXf& m) { blocks.emplace_back(name, m); }

  const Eigen::MatrixXf* find(const std::string& name) const {
    for (const auto& [n, m] : blocks)
      if (n == name) return &m;
    return nullptr;
  }

  uint64_t counter(const std::string& name, uint64_t fallback = 0) const {
    auto it = counters.find(name);
    return it == counters.end() ? fallback : it->second;
  }

  // FNV-1a over block names and raw float bytes; used by the frozen-base
  // contract checks.
  uint64_t content_hash(const std::string& name_prefix = "") const;

  // Refuses to overwrite an existing file unless `overwrite` is set.
  void save(const std::string& path, bool overwrite = false) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace nerfmark
