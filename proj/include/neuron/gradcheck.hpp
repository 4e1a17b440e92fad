// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end gradient check: encoder, both streams and the summed phase
// losses on a two-sample batch of random sequences, in double precision.

#include <random>

#include "neuron/alignment.hpp"
#include "neuron/model.hpp"

namespace neuron {

struct GradCheckFixture {
  ModelConfig model;
  SemanticBank bank;
  Parameters<double> params;
  std::vector<SkeletonSequence> batch;
};

/// Central-difference step used by default. Smaller steps are dominated by
/// rounding on coordinates whose gradient is below ~1e-6, larger ones by
/// truncation.
inline constexpr double kGradCheckStep = 3e-4;

inline ModelConfig gradcheck_model() {
  ModelConfig m;
  m.encoder = EncoderConfig{6, 3, 2, 1, 3, 3};
  m.N_s = 3;
  m.N_t = 3;
  m.d = 4;
  m.mlp_hidden = 3;
  m.head_hidden = 3;
  return m;
}

inline GradCheckFixture make_gradcheck_fixture(std::uint64_t seed, ModelConfig model = gradcheck_model()) {
  GradCheckFixture f{model, synth_bank(3, 2, model.d, seed, model.phases), init_parameters<double>(model, seed), {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> coord(-1.f, 1.f);
  for (int label : {0, 2}) {
    SkeletonSequence s;
    s.label = label;
    s.coords = Tensor<float>({3, model.encoder.T, model.encoder.V, model.encoder.M});
    for (auto& v : s.coords.data()) v = coord(rng);
    f.batch.push_back(std::move(s));
  }
  return f;
}

inline Var<double> fixture_loss(const GradCheckFixture& f, const Bound<double>& p) {
  ClassEmbeddings<double> targets(p, f.bank, {0, 1, 2});
  std::vector<Var<double>> losses;
  for (const auto& s : f.batch) {
    losses.push_back(total_loss(p, forward(p, f.model, s).pooled, targets, s.label, f.model.shared_heads,
                                f.model.temperature));
  }
  return scale(add_n(losses), 1.0 / static_cast<double>(losses.size()));
}

inline GradCheckReport check_fixture(const GradCheckFixture& f, double eps = kGradCheckStep) {
  return grad_check(f.params, [&f](Graph<double>&, const Bound<double>& p) { return fixture_loss(f, p); }, eps);
}

}  // namespace neuron
