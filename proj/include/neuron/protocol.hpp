// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "neuron/io.hpp"

namespace neuron {

enum class EvalMode { zsl, gzsl };

inline const char* mode_name(EvalMode m) { return m == EvalMode::zsl ? "zsl" : "gzsl"; }

inline EvalMode parse_mode(const std::string& s) {
  if (s == "zsl" || s == "ZSL") return EvalMode::zsl;
  if (s == "gzsl" || s == "GZSL") return EvalMode::gzsl;
  throw ConfigError("unknown evaluation mode '" + s + "' (expected zsl or gzsl)");
}

/// Disjoint seen/unseen class partition plus the evaluation setting.
struct SplitProtocol {
  std::vector<int> seen;
  std::vector<int> unseen;
  EvalMode mode = EvalMode::gzsl;

  void validate() const {
    std::set<int> s(seen.begin(), seen.end());
    if (s.size() != seen.size()) throw ProtocolError("seen class listed twice");
    std::set<int> u(unseen.begin(), unseen.end());
    if (u.size() != unseen.size()) throw ProtocolError("unseen class listed twice");
    for (int y : unseen) {
      if (s.count(y)) throw ProtocolError("class " + std::to_string(y) + " is both seen and unseen");
    }
    if (seen.empty()) throw ProtocolError("protocol has no seen classes");
  }

  bool is_seen(int y) const { return std::find(seen.begin(), seen.end(), y) != seen.end(); }
  bool is_unseen(int y) const { return std::find(unseen.begin(), unseen.end(), y) != unseen.end(); }
  bool contains(int y) const { return is_seen(y) || is_unseen(y); }

  /// Unseen classes for ZSL; every class for GZSL. Sorted ascending.
  std::vector<int> candidates() const {
    std::vector<int> out = unseen;
    if (mode == EvalMode::gzsl) out.insert(out.end(), seen.begin(), seen.end());
    std::sort(out.begin(), out.end());
    return out;
  }

  SplitProtocol swapped() const { return {unseen, seen, mode}; }
};

inline io::json to_json(const SplitProtocol& p) {
  return {{"seen", p.seen}, {"unseen", p.unseen}, {"mode", mode_name(p.mode)}};
}

inline SplitProtocol protocol_from_json(const io::json& j, const std::string& where = "protocol") {
  SplitProtocol p;
  try {
    p.seen = j.at("seen").get<std::vector<int>>();
    p.unseen = j.at("unseen").get<std::vector<int>>();
    if (j.contains("mode")) p.mode = parse_mode(j.at("mode").get<std::string>());
  } catch (const io::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  p.validate();
  return p;
}

inline void save_protocol(const std::filesystem::path& path, const SplitProtocol& p) {
  io::json j = to_json(p);
  j.erase("mode");
  io::write_json(path, j);
}

inline SplitProtocol load_protocol(const std::filesystem::path& path) {
  return protocol_from_json(io::read_json(path), path.string());
}

}  // namespace neuron
