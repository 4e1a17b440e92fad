// SPDX-License-Identifier: Apache-2.0
#pragma once

// The full network: encoder, spatial and temporal prototype streams, and the
// projection heads, wired to one set of named parameters.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "neuron/alignment.hpp"
#include "neuron/encoder.hpp"
#include "neuron/spatial.hpp"
#include "neuron/temporal.hpp"

namespace neuron {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t N_s = 80;
  std::size_t N_t = 80;
  std::size_t phases = 3;
  std::size_t d = 32;             // semantic dimension, taken from the bank
  std::size_t mlp_hidden = 32;    // refiners and gate projections
  std::size_t head_hidden = 32;   // projection heads and psi
  PhaseSchedule schedule;
  double temperature = 1.0;
  bool shared_refiners = false;
  bool shared_gates = false;
  bool shared_heads = false;

  void validate() const {
    encoder.validate(phases);
    schedule.validate(phases);
    if (N_s == 0 || N_t == 0) throw ConfigError("N_s and N_t must be at least 1");
    if (d == 0 || mlp_hidden == 0 || head_hidden == 0) throw ConfigError("zero width in model config");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  }

  std::string refiner(std::size_t e) const {
    return shared_refiners ? "spatial.refine" : "spatial.refine" + std::to_string(e);
  }
  std::string gate(const char* kind, std::size_t e) const {
    std::string base = std::string("temporal.") + kind;
    return shared_gates ? base : base + std::to_string(e);
  }
};

inline io::json to_json(const ModelConfig& c) {
  return {{"T", c.encoder.T},
          {"T_hat", c.encoder.T_hat},
          {"V", c.encoder.V},
          {"M", c.encoder.M},
          {"C", c.encoder.C},
          {"encoder_hidden", c.encoder.hidden},
          {"N_s", c.N_s},
          {"N_t", c.N_t},
          {"N_e", c.phases},
          {"d", c.d},
          {"mlp_hidden", c.mlp_hidden},
          {"head_hidden", c.head_hidden},
          {"alphas", c.schedule.alphas},
          {"temperature", c.temperature},
          {"shared_refiners", c.shared_refiners},
          {"shared_gates", c.shared_gates},
          {"shared_heads", c.shared_heads}};
}

/// Fields absent from `j` keep the values already in `c`.
inline void merge_json(ModelConfig& c, const io::json& j) {
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("T", c.encoder.T);
  get("T_hat", c.encoder.T_hat);
  get("V", c.encoder.V);
  get("M", c.encoder.M);
  get("C", c.encoder.C);
  get("encoder_hidden", c.encoder.hidden);
  get("N_s", c.N_s);
  get("N_t", c.N_t);
  get("N_e", c.phases);
  get("d", c.d);
  get("mlp_hidden", c.mlp_hidden);
  get("head_hidden", c.head_hidden);
  get("alphas", c.schedule.alphas);
  get("temperature", c.temperature);
  get("shared_refiners", c.shared_refiners);
  get("shared_gates", c.shared_gates);
  get("shared_heads", c.shared_heads);
}

template <class T>
Tensor<T> uniform_prototype(std::size_t C, std::size_t N, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(C));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> P({C, N});
  for (auto& v : P.data()) v = static_cast<T>(dist(rng));
  return P;
}

/// Fresh parameters for `cfg`, deterministic in `seed`.
template <class T>
Parameters<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Parameters<T> params;
  const std::size_t C = cfg.encoder.C;
  add_encoder_params(params, cfg.encoder, rng);

  params.add("spatial.P0", uniform_prototype<T>(C, cfg.N_s, rng));
  const MlpShape square{C, cfg.mlp_hidden, C};
  for (std::size_t e = 0; e < (cfg.shared_refiners ? 1 : cfg.phases); ++e) {
    add_mlp(params, cfg.refiner(e), square, rng);
  }

  params.add("temporal.P0", uniform_prototype<T>(C, cfg.N_t, rng));
  for (std::size_t e = 0; e < (cfg.shared_gates ? 1 : cfg.phases); ++e) {
    add_mlp(params, cfg.gate("recall", e), square, rng);
    add_mlp(params, cfg.gate("remember", e), square, rng);
    add_mlp(params, cfg.gate("refine", e), square, rng);
  }

  const MlpShape head{C, cfg.head_hidden, cfg.d};
  for (Stream s : {Stream::spatial, Stream::temporal}) {
    for (std::size_t e = 0; e < (cfg.shared_heads ? 1 : cfg.phases); ++e) {
      add_mlp(params, head_name(s, e, cfg.shared_heads), head, rng);
    }
  }
  // A bias after psi shifts every class logit equally, so it is left out.
  add_mlp(params, "psi", MlpShape{cfg.d, cfg.head_hidden, cfg.d, Activation::tanh, false}, rng);
  return params;
}

/// Everything one sample produces on its way to the losses.
template <class T>
struct SampleOutputs {
  EncodedVars<T> features;
  std::vector<Var<T>> spatial_prototypes;   // P_s^1..P_s^{N_e}
  std::vector<Var<T>> temporal_prototypes;  // P_t^1..P_t^{N_e}
  PhaseFeatures<T> pooled;
};

template <class T>
ColumnMap<T> column_mlp(const Bound<T>& p, std::string prefix) {
  return [&p, prefix = std::move(prefix)](Var<T> x) {
    return column_mlp_apply(p, prefix, x);
  };
}

/// Both streams on top of already-encoded features.
template <class T>
SampleOutputs<T> run_streams(const Bound<T>& p, const ModelConfig& cfg, EncodedVars<T> features,
                             MemoryMode memory = MemoryMode::gated) {
  SampleOutputs<T> out;
  out.features = features;

  // Each joint spreads unit attention mass over N_s attributes, so an
  // aggregated column carries about V_hat/N_s of a joint feature.
  const T gain = static_cast<T>(static_cast<double>(cfg.N_s) / static_cast<double>(features.Fs.value().rows()));
  std::vector<Refiner<T>> refiners;
  for (std::size_t e = 0; e < cfg.phases; ++e) {
    ColumnMap<T> refine = column_mlp(p, cfg.refiner(e));
    refiners.push_back([refine, gain](Var<T> x) { return refine(scale(x, gain)); });
  }
  out.spatial_prototypes = run_spatial(features.Fs, p["spatial.P0"], cfg.schedule, refiners);

  std::vector<GateSet<T>> gates;
  for (std::size_t e = 0; e < cfg.phases; ++e) {
    gates.push_back({column_mlp(p, cfg.gate("recall", e)), column_mlp(p, cfg.gate("remember", e)),
                     column_mlp(p, cfg.gate("refine", e))});
  }
  out.temporal_prototypes = run_temporal(features.Ft, p["temporal.P0"], gates, memory);

  for (Var<T> P : out.spatial_prototypes) out.pooled.spatial.push_back(pool_prototype(P));
  for (Var<T> P : out.temporal_prototypes) out.pooled.temporal.push_back(pool_prototype(P));
  return out;
}

template <class T>
SampleOutputs<T> forward(const Bound<T>& p, const ModelConfig& cfg, const SkeletonSequence& x) {
  return run_streams(p, cfg, encode(p, cfg.encoder, x));
}

/// Precomputed backbone features bypass the encoder.
template <class T>
SampleOutputs<T> forward(const Bound<T>& p, const ModelConfig& cfg, const FeatureMap<float>& x) {
  if (x.channels() != cfg.encoder.C || x.t_hat() % cfg.phases != 0) {
    throw ConfigError("feature map " + shape_str(x.F.shape()) + " incompatible with model (C=" +
                      std::to_string(cfg.encoder.C) + ", N_e=" + std::to_string(cfg.phases) + ")");
  }
  Var<T> F = p.graph().constant(x.F.template cast<T>());
  return run_streams(p, cfg, pooled_views(F));
}

inline int label_of(const SkeletonSequence& s) { return s.label; }
inline int label_of(const FeatureMap<float>& f) { return f.label; }

}  // namespace neuron
