// SPDX-License-Identifier: Apache-2.0
#pragma once

// Temporal memory: each phase attends over one contiguous time segment and
// blends the previous prototype (recall) with refined new evidence (remember)
// through sigmoid gates.

#include <functional>
#include <vector>

#include "neuron/autodiff.hpp"

namespace neuron {

template <class T>
using ColumnMap = std::function<Var<T>(Var<T>)>;

/// Gate projections and refiner, each mapping [C x N_t] to [C x N_t].
template <class T>
struct GateSet {
  ColumnMap<T> recall;
  ColumnMap<T> remember;
  ColumnMap<T> refine;
};

enum class MemoryMode { gated, ungated };

/// Contiguous equal-length segments of Ft [T_hat x C], in temporal order.
template <class T>
std::vector<Var<T>> segment_temporal(Var<T> Ft, std::size_t phases) {
  const std::size_t frames = Ft.value().rows();
  if (phases == 0 || frames % phases != 0) {
    throw ConfigError("T_hat=" + std::to_string(frames) + " not divisible by phase count " +
                      std::to_string(phases));
  }
  const std::size_t len = frames / phases;
  std::vector<Var<T>> out;
  for (std::size_t e = 0; e < phases; ++e) out.push_back(slice_rows(Ft, e * len, len));
  return out;
}

/// seg^T * softmax(seg * P), the softmax taken over the frames of the
/// segment so each attribute is a convex mix of frame features.
template <class T>
Var<T> temporal_aggregate(Var<T> segment, Var<T> P) {
  Var<T> H = softmax(matmul(segment, P), 0);
  return matmul(transpose(segment), H);
}

/// sigmoid(recall(P_hat)) * P + sigmoid(remember(P_hat)) * refine(P_hat)
template <class T>
Var<T> memory_update(Var<T> P_hat, Var<T> P, const GateSet<T>& gates) {
  Var<T> g_recall = sigmoid(gates.recall(P_hat));
  Var<T> g_remember = sigmoid(gates.remember(P_hat));
  return add(multiply(g_recall, P), multiply(g_remember, gates.refine(P_hat)));
}

/// Phase e consumes segment e. Ungated mode replaces the blend by
/// refine(P_hat) alone, which is the baseline the memory is compared against.
template <class T>
std::vector<Var<T>> run_temporal(Var<T> Ft, Var<T> P0, const std::vector<GateSet<T>>& gates,
                                 MemoryMode mode = MemoryMode::gated) {
  std::vector<Var<T>> segments = segment_temporal(Ft, gates.size());
  std::vector<Var<T>> out;
  Var<T> P = P0;
  for (std::size_t e = 0; e < gates.size(); ++e) {
    Var<T> P_hat = temporal_aggregate(segments[e], P);
    P = mode == MemoryMode::gated ? memory_update(P_hat, P, gates[e]) : gates[e].refine(P_hat);
    out.push_back(P);
  }
  return out;
}

}  // namespace neuron
