// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace nerfmark {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'R', 'K'};

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
std::string read_str(std::istream& in) {
  const uint32_t len = read_u32(in);
  if (len > (1u << 28)) throw std::runtime_error("checkpoint: corrupt string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

uint64_t Checkpoint::content_hash(const std::string& name_prefix) const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, m] : blocks) {
    if (name.rfind(name_prefix, 0) != 0) continue;
    mix(name.data(), name.size());
    mix(m.data(), sizeof(float) * static_cast<size_t>(m.size()));
  }
  return h;
}

void Checkpoint::save(const std::string& path, bool overwrite) const {
  namespace fs = std::filesystem;
  if (!overwrite && fs::exists(path))
    throw std::runtime_error("checkpoint: " + path + " exists (use --force to overwrite)");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp + " for writing");
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, seed);
    write_u32(out, static_cast<uint32_t>(counters.size()));
    for (const auto& [name, value] : counters) {
      write_str(out, name);
      write_u64(out, value);
    }
    write_str(out, config_snapshot);
    write_u32(out, static_cast<uint32_t>(blocks.size()));
    for (const auto& [name, m] : blocks) {
      write_str(out, name);
      write_u32(out, static_cast<uint32_t>(m.rows()));
      write_u32(out, static_cast<uint32_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(float) * m.size()));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: version mismatch in " + path + " (file v" +
                             std::to_string(version) + ", expected v" + std::to_string(kVersion) +
                             ")");
  Checkpoint ck;
  ck.seed = read_u64(in);
  const uint32_t n_counters = read_u32(in);
  for (uint32_t i = 0; i < n_counters; ++i) {
    std::string name = read_str(in);
    ck.counters[name] = read_u64(in);
  }
  ck.config_snapshot = read_str(in);
  const uint32_t n_blocks = read_u32(in);
  for (uint32_t i = 0; i < n_blocks; ++i) {
    std::string name = read_str(in);
    const uint32_t rows = read_u32(in);
    const uint32_t cols = read_u32(in);
    if (static_cast<uint64_t>(rows) * cols > (1ull << 30))
      throw std::runtime_error("checkpoint: corrupt block shape in " + path);
    Eigen::MatrixXf m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    ck.blocks.emplace_back(std::move(name), std::move(m));
  }
  return ck;
}

}  // namespace nerfmark
