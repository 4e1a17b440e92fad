// SPDX-License-Identifier: Apache-2.0
#pragma once

// Desk-scale skeleton encoder: a stand-in for a pretrained graph-convolution
// backbone that is small enough to train end-to-end on one CPU core.

#include <random>
#include <string>

#include "neuron/nn.hpp"
#include "neuron/skeleton.hpp"

namespace neuron {

struct EncoderConfig {
  std::size_t T = 60;       // input frames
  std::size_t T_hat = 12;   // encoded frames
  std::size_t V = 8;        // joints per person
  std::size_t M = 1;        // persons
  std::size_t C = 64;       // channels
  std::size_t hidden = 32;  // width of the per-cell MLP

  std::size_t v_hat() const { return V * M; }

  /// Checks the frame-count contract against the number of phases.
  void validate(std::size_t phases) const {
    if (T == 0 || T_hat == 0 || V == 0 || M == 0 || C == 0 || hidden == 0) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (T % T_hat != 0) {
      throw ConfigError("input frames T=" + std::to_string(T) + " not divisible by T_hat=" +
                        std::to_string(T_hat));
    }
    if (phases == 0 || T_hat % phases != 0) {
      throw ConfigError("T_hat=" + std::to_string(T_hat) + " not divisible by phase count " +
                        std::to_string(phases));
    }
  }
};

template <class T>
void add_encoder_params(Parameters<T>& params, const EncoderConfig& cfg, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(3.0);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> lift({3, cfg.C});
  for (auto& v : lift.data()) v = static_cast<T>(dist(rng));
  params.add("enc.lift.w", std::move(lift));
  params.add("enc.lift.b", Tensor<T>({cfg.C}, T{0}));
  // Learned per-joint offset; starts at zero so that identical coordinates
  // encode identically at initialisation.
  params.add("enc.joint", Tensor<T>({cfg.v_hat(), cfg.C}, T{0}));
  add_mlp(params, "enc.mlp", MlpShape{cfg.C, cfg.hidden, cfg.C}, rng);
}

/// Encoder output inside a graph: F is [T_hat x V_hat x C].
template <class T>
struct EncodedVars {
  Var<T> F;
  Var<T> Fs;
  Var<T> Ft;
};

/// Pooled view helper shared by the encoder and the feature-file path.
template <class T>
EncodedVars<T> pooled_views(Var<T> F) {
  return {F, mean_pool(F, 0), mean_pool(F, 1)};
}

/// Time-pooled coordinates as a [(T_hat*V_hat) x 3] matrix, rows ordered
/// (frame, joint) with persons folded into joints as m*V + v.
template <class T>
Tensor<T> pooled_coordinates(const SkeletonSequence& x, const EncoderConfig& cfg) {
  if (x.coords.empty()) throw InputError("cannot encode an empty sequence");
  if (x.frames() != cfg.T || x.joints() != cfg.V || x.persons() != cfg.M) {
    throw ConfigError("sequence shape " + shape_str(x.coords.shape()) + " does not match encoder [3x" +
                      std::to_string(cfg.T) + "x" + std::to_string(cfg.V) + "x" +
                      std::to_string(cfg.M) + "]; resample first");
  }
  if (cfg.T % cfg.T_hat != 0) {
    throw ConfigError("input frames T=" + std::to_string(cfg.T) + " not divisible by T_hat=" +
                      std::to_string(cfg.T_hat));
  }
  const std::size_t stride = cfg.T / cfg.T_hat, Vh = cfg.v_hat();
  Tensor<T> out({cfg.T_hat * Vh, 3});
  for (std::size_t th = 0; th < cfg.T_hat; ++th)
    for (std::size_t m = 0; m < cfg.M; ++m)
      for (std::size_t v = 0; v < cfg.V; ++v)
        for (std::size_t a = 0; a < 3; ++a) {
          T acc{0};
          for (std::size_t s = 0; s < stride; ++s) acc += static_cast<T>(x.at(a, th * stride + s, v, m));
          out[(th * Vh + m * cfg.V + v) * 3 + a] = acc / static_cast<T>(stride);
        }
  return out;
}

/// Per-joint affine lift of the 3D coordinates to C channels, temporal
/// average pooling by stride T/T_hat, then one shared MLP per (frame, joint)
/// cell. Lift and pooling are both affine, so pooling is applied to the raw
/// coordinates first.
template <class T>
EncodedVars<T> encode(const Bound<T>& p, const EncoderConfig& cfg, const SkeletonSequence& x) {
  Graph<T>& g = p.graph();
  Var<T> coords = g.constant(pooled_coordinates<T>(x, cfg));
  Var<T> lifted = affine(coords, p["enc.lift.w"], p["enc.lift.b"]);
  lifted = add_tiled_rows(lifted, p["enc.joint"]);
  Var<T> cells = mlp(p, "enc.mlp", lifted);
  Var<T> F = reshape(cells, {cfg.T_hat, cfg.v_hat(), cfg.C});
  return pooled_views(F);
}

/// Runs the encoder outside of training and returns plain tensors.
template <class T>
FeatureMap<T> encode_features(const Parameters<T>& params, const EncoderConfig& cfg,
                              const SkeletonSequence& x) {
  Graph<T> g;
  Bound<T> p(g, params);
  EncodedVars<T> e = encode(p, cfg, x);
  FeatureMap<T> fm;
  fm.F = e.F.value();
  fm.Fs = e.Fs.value();
  fm.Ft = e.Ft.value();
  fm.label = x.label;
  return fm;
}

}  // namespace neuron
