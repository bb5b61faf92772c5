#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcvsr/core.hpp"
#include "fcvsr/nn.hpp"

namespace fcvsr {

/// Parameter archives are directories: a header.json describing the
/// architecture plus one little-endian float32 blob per named tensor under
/// tensors/, e.g. tensors/cleaning/in/weight.f32. Optimizer state for resume
/// lives under opt/ with the same naming.
namespace archive {

inline void write_blob(const std::filesystem::path& dir, const std::string& name,
                       const std::vector<float>& data) {
  const auto path = dir / (name + ".f32");
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("archive: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw DataError("archive: short write to " + path.string());
}

inline bool blob_exists(const std::filesystem::path& dir, const std::string& name) {
  return std::filesystem::exists(dir / (name + ".f32"));
}

inline std::vector<float> read_blob(const std::filesystem::path& dir, const std::string& name,
                                    std::size_t expected_count) {
  const auto path = dir / (name + ".f32");
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("archive: missing tensor " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_count * sizeof(float))
    throw DataError("archive: " + path.string() + " holds " + std::to_string(bytes / sizeof(float)) +
                    " floats, expected " + std::to_string(expected_count));
  std::vector<float> data(expected_count);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw DataError("archive: short read from " + path.string());
  return data;
}

inline void write_header(const std::filesystem::path& dir, const nlohmann::json& header) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "header.json");
  if (!out) throw DataError("archive: cannot write header under " + dir.string());
  out << header.dump(2) << "\n";
}

inline nlohmann::json read_header(const std::filesystem::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw DataError("archive: missing header.json under " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("archive: bad header.json under " + dir.string() + ": " + e.what());
  }
  return j;
}

template <typename T>
void save_tensors(const std::filesystem::path& dir, const ParamRefs<T>& refs,
                  const std::string& prefix = "tensors") {
  for (const auto& [name, p] : refs) {
    std::vector<float> data(p->v.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(p->v[i]);
    write_blob(dir, prefix + "/" + name, data);
  }
}

template <typename T>
void load_tensors(const std::filesystem::path& dir, const ParamRefs<T>& refs,
                  const std::string& prefix = "tensors") {
  for (const auto& [name, p] : refs) {
    const auto data = read_blob(dir, prefix + "/" + name, p->count());
    for (std::size_t i = 0; i < data.size(); ++i) p->v[i] = static_cast<T>(data[i]);
  }
}

/// Byte-level digest of every tensor blob, for freeze verification.
inline std::uint64_t tensor_checksum(const std::filesystem::path& dir) {
  std::uint64_t h = 1469598103934665603ull;
  std::vector<std::filesystem::path> files;
  const auto root = dir / "tensors";
  if (!std::filesystem::exists(root)) throw DataError("archive: no tensors under " + dir.string());
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string rel = std::filesystem::relative(f, dir).string();
    for (char c : rel) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    std::ifstream in(f, std::ios::binary);
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i)
        h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ull;
      if (!in) break;
    }
  }
  return h;
}

}  // namespace archive
}  // namespace fcvsr
