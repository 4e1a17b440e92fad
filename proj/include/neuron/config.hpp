// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: defaults, then a JSON file, then command-line overrides.
// Every override is remembered so the run manifest can list it.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuron/eval.hpp"
#include "neuron/synthetic.hpp"

namespace neuron {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  CalibrationConfig calib;
  SynthSpec synth;
  std::uint64_t seed = 0;
  std::string seed_source = "default";  // default | file | env | flag
  std::vector<std::string> overrides;   // "key=value" in application order

  /// Propagates the global seed to every seeded component.
  void apply_seed() {
    train.seed = seed;
    synth.seed = seed;
  }
};

inline io::json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)}, {"train", to_json(c.train)}, {"calib", to_json(c.calib)},
          {"synth", to_json(c.synth)}, {"seed", c.seed},          {"seed_source", c.seed_source},
          {"overrides", c.overrides}};
}

inline void merge_json(CalibrationConfig& c, const io::json& j) {
  if (j.contains("gamma_s")) c.gamma_s = j.at("gamma_s").get<double>();
  if (j.contains("gamma_t")) c.gamma_t = j.at("gamma_t").get<double>();
}

/// Fields present in `j` replace the current values; unknown top-level keys
/// are rejected so typos do not pass silently.
inline void merge_json(RunConfig& c, const io::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") merge_json(c.model, value);
      else if (key == "train") merge_json(c.train, value);
      else if (key == "calib") merge_json(c.calib, value);
      else if (key == "synth") merge_json(c.synth, value);
      else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
        c.seed_source = "file";
      } else if (key == "seed_source" || key == "overrides") {
        continue;  // written by manifests; ignored on reload
      } else {
        throw ConfigError(where + ": unknown config key '" + key + "'");
      }
    }
  } catch (const io::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

/// Defaults, then `file` if given, then NEURON_SEED when nothing set a seed.
/// A run manifest is accepted as a config file; its recorded seed counts as
/// set by the file.
inline RunConfig resolve_config(const std::optional<std::filesystem::path>& file) {
  RunConfig c;
  if (file) {
    io::json doc = io::read_json(*file);
    if (doc.is_object() && doc.value("format", "") == "neuron.manifest") doc = doc.at("config");
    merge_json(c, doc, file->string());
  }
  if (c.seed_source == "default") {
    if (const char* env = std::getenv("NEURON_SEED"); env && *env) {
      try {
        std::size_t used = 0;
        c.seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("NEURON_SEED is not an unsigned integer: '") + env + "'");
      }
      c.seed_source = "env";
    }
  }
  c.apply_seed();
  return c;
}

/// Records and applies one flag override. Flags win over file and env.
template <class V>
void override_field(RunConfig& c, const std::string& key, V& field, const V& value) {
  field = value;
  io::json j = value;
  c.overrides.push_back(key + "=" + j.dump());
}

inline void override_seed(RunConfig& c, std::uint64_t seed) {
  override_field(c, "seed", c.seed, seed);
  c.seed_source = "flag";
  c.apply_seed();
}

}  // namespace neuron
