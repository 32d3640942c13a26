// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nerfmark {

// Flat key=value configuration. Precedence: built-in defaults < file <
// command-line overrides. Unknown keys are rejected so typos surface early.
class Config {
 public:
  Config();  // defaults

  static Config from_file(const std::string& path);
  void apply_file(const std::string& path);
  void apply_override(const std::string& key_equals_value);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  int64_t get_int64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;      // comma separated
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  // Serialized snapshot, one key=value per line, keys sorted.
  std::string snapshot() const;
  static Config from_snapshot(const std::string& text);

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  bool allow_unknown_ = false;
};

}  // namespace nerfmark
