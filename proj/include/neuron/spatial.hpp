// SPDX-License-Identifier: Apache-2.0
#pragma once

// Spatial compression: per-phase attention of joints over prototype
// attributes, top-k retention per joint row, then aggregation and refinement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "neuron/autodiff.hpp"

namespace neuron {

/// Retention fractions, one per phase; must be nondecreasing and in [0, 1].
struct PhaseSchedule {
  std::vector<double> alphas{0.3, 0.5, 0.7};

  void validate(std::size_t phases) const {
    if (alphas.size() != phases) {
      throw ConfigError("schedule has " + std::to_string(alphas.size()) + " alphas for " +
                        std::to_string(phases) + " phases");
    }
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) throw ConfigError("alpha outside [0, 1]");
      if (i && alphas[i] < alphas[i - 1]) throw ConfigError("alphas must be nondecreasing");
    }
  }
};

/// Number of scores kept per row: max(1, ceil(alpha * n)). A 1e-9 slack
/// absorbs products like 0.7 * 80 landing just above an integer.
inline std::size_t retained_count(double alpha, std::size_t n) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

/// 0/1 support of the row-wise top-k. Ties keep the lower column first.
template <class T>
Tensor<T> topk_support(const Tensor<T>& H, double alpha) {
  if (H.rank() != 2) throw DimensionError("topk_mask needs a matrix, got " + shape_str(H.shape()));
  const std::size_t rows = H.rows(), cols = H.cols();
  const std::size_t k = retained_count(alpha, cols);
  Tensor<T> mask({rows, cols}, T{0});
  std::vector<std::size_t> order(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const T* row = H.raw() + r * cols;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [row](std::size_t a, std::size_t b) {
                        return row[a] > row[b] || (row[a] == row[b] && a < b);
                      });
    for (std::size_t i = 0; i < k; ++i) mask[r * cols + order[i]] = T{1};
  }
  return mask;
}

/// Keeps the top-k scores of every row unchanged and zeroes the rest.
template <class T>
Tensor<T> topk_mask(const Tensor<T>& H, double alpha) {
  Tensor<T> out = topk_support(H, alpha);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= H[i];
  return out;
}

/// Graph version: the support is a constant of the forward pass, so gradients
/// reach the retained entries only.
template <class T>
Var<T> topk_mask(Var<T> H, double alpha) {
  return multiply_const(H, topk_support(H.value(), alpha));
}

/// softmax(Fs * Ps) over the attribute axis, one distribution per joint.
template <class T>
Var<T> spatial_similarity(Var<T> Fs, Var<T> Ps) {
  return softmax(matmul(Fs, Ps), 1);
}

template <class T>
using Refiner = std::function<Var<T>(Var<T>)>;

/// refine(Fs^T * H_masked): the next [C x N_s] prototype.
template <class T>
Var<T> compress_update(Var<T> Fs, Var<T> H_masked, const Refiner<T>& refine) {
  return refine(matmul(transpose(Fs), H_masked));
}

/// One similarity/mask/update step per phase; returns every intermediate
/// prototype P^1..P^{N_e}.
template <class T>
std::vector<Var<T>> run_spatial(Var<T> Fs, Var<T> P0, const PhaseSchedule& schedule,
                                const std::vector<Refiner<T>>& refiners) {
  if (refiners.size() != schedule.alphas.size()) {
    throw ConfigError("run_spatial needs one refiner per phase");
  }
  schedule.validate(refiners.size());
  std::vector<Var<T>> out;
  Var<T> P = P0;
  for (std::size_t e = 0; e < refiners.size(); ++e) {
    Var<T> H = spatial_similarity(Fs, P);
    Var<T> Hm = topk_mask(H, schedule.alphas[e]);
    P = compress_update(Fs, Hm, refiners[e]);
    out.push_back(P);
  }
  return out;
}

}  // namespace neuron
