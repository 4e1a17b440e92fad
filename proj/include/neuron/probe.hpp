// SPDX-License-Identifier: Apache-2.0
#pragma once

// Marker-retention probe for the temporal memory. The first segment carries
// one repeated random frame, later segments carry fresh noise. The marker is
// refine_1(P_hat_1): what phase 1 extracts from its own input, before any
// gating. Both variants are then scored by how much of it survives to the
// final prototype.

#include <cmath>
#include <random>

#include "neuron/model.hpp"

namespace neuron {

struct RetentionScore {
  double gated = 0.0;
  double ungated = 0.0;
};

inline double flat_cosine(const Tensor<double>& a, const Tensor<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline RetentionScore retention_probe(const ModelConfig& cfg, std::uint64_t seed) {
  const auto params = init_parameters<double>(cfg, seed);
  const std::size_t C = cfg.encoder.C, frames = cfg.encoder.T_hat, len = frames / cfg.phases;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> marker(C);
  for (double& v : marker) v = normal(rng);
  Tensor<double> Ft({frames, C});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t c = 0; c < C; ++c) Ft(f, c) = f < len ? marker[c] : normal(rng);

  Graph<double> g;
  Bound<double> p(g, params);
  std::vector<GateSet<double>> gates;
  for (std::size_t e = 0; e < cfg.phases; ++e) {
    gates.push_back({column_mlp(p, cfg.gate("recall", e)), column_mlp(p, cfg.gate("remember", e)),
                     column_mlp(p, cfg.gate("refine", e))});
  }
  Var<double> F = g.constant(Ft);
  auto gated = run_temporal(F, p["temporal.P0"], gates, MemoryMode::gated);
  auto ungated = run_temporal(F, p["temporal.P0"], gates, MemoryMode::ungated);
  const Tensor<double>& encoded = ungated.front().value();
  return {flat_cosine(gated.back().value(), encoded), flat_cosine(ungated.back().value(), encoded)};
}

}  // namespace neuron
