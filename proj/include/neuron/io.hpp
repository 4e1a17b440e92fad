// SPDX-License-Identifier: Apache-2.0
#pragma once

// Manifest + payload file pairs: a JSON manifest describing shapes, next to a
// raw little-endian float32 payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuron/errors.hpp"

namespace neuron::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FileError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw FileError("write failed for " + path.string());
}

inline void write_f32(const fs::path& path, const std::vector<float>& values) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    words[i] = to_le(std::bit_cast<std::uint32_t>(values[i]));
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw FileError("write failed for " + path.string());
}

/// Reads a whole float32 payload. The caller checks the count against its
/// manifest; a size that is not a multiple of four is rejected here.
inline std::vector<float> read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FileError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 4 != 0) {
    throw FormatError(path.string() + ": payload of " + std::to_string(bytes) +
                      " bytes is not a whole number of float32 values (trailing bytes at offset " +
                      std::to_string(bytes - bytes % 4) + ")");
  }
  in.seekg(0);
  std::vector<std::uint32_t> words(bytes / 4);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
  std::vector<float> out(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) out[i] = std::bit_cast<float>(to_le(words[i]));
  return out;
}

inline void expect_count(const fs::path& path, std::size_t got, std::size_t want) {
  if (got != want) {
    throw FormatError(path.string() + ": manifest implies " + std::to_string(want * 4) +
                      " payload bytes but file holds " + std::to_string(got * 4) +
                      " (mismatch begins at byte offset " + std::to_string(std::min(got, want) * 4) +
                      ")");
  }
}

/// `dir/stem.json` -> `dir/stem.bin`
inline fs::path payload_path_for(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

/// Resolves the payload named in a manifest relative to the manifest's folder.
inline fs::path resolve_payload(const fs::path& manifest, const json& doc) {
  if (!doc.contains("payload")) return payload_path_for(manifest);
  return manifest.parent_path() / doc.at("payload").get<std::string>();
}

template <class T>
T field(const json& doc, const char* key, const fs::path& where) {
  if (!doc.contains(key)) throw FormatError(where.string() + ": manifest lacks '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where.string() + ": bad '" + key + "': " + e.what());
  }
}

/// FNV-1a 64-bit over a file's bytes, hex encoded. Used for run manifests.
inline std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace neuron::io
