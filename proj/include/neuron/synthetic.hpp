// SPDX-License-Identifier: Apache-2.0
#pragma once

// Class-structured synthetic skeletons with matching semantics.
//
// Every class is a template of per-joint sinusoidal trajectories. Seen
// classes draw their template at random; each unseen class is the midpoint of
// two seen parents, so its motion and its semantics are both predictable from
// what the seen classes teach. Semantic vectors are a fixed random linear
// embedding of the template rest pose with length semantic_norm.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "neuron/protocol.hpp"
#include "neuron/semantics.hpp"
#include "neuron/skeleton.hpp"

namespace neuron {

struct SynthSpec {
  std::size_t num_classes = 12;
  std::size_t samples_per_class = 50;
  std::size_t T = 60;
  std::size_t V = 8;
  std::size_t M = 1;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  double seen_fraction = 8.0 / 12.0;
  double test_fraction = 0.2;  // held-out share of each seen class
  std::size_t descriptions = 4;
  std::size_t dim = 32;
  std::size_t phases = 3;
  double semantic_norm = 2.5;  // length of every class base vector

  std::size_t seen_count() const {
    const auto n = static_cast<std::size_t>(std::llround(seen_fraction * static_cast<double>(num_classes)));
    return std::clamp<std::size_t>(n, 2, num_classes - 1);
  }
};

inline io::json to_json(const SynthSpec& s) {
  return {{"num_classes", s.num_classes}, {"samples_per_class", s.samples_per_class},
          {"T", s.T}, {"V", s.V}, {"M", s.M}, {"noise_std", s.noise_std}, {"seed", s.seed},
          {"seen_fraction", s.seen_fraction}, {"test_fraction", s.test_fraction},
          {"N_a", s.descriptions}, {"d", s.dim}, {"N_e", s.phases}, {"semantic_norm", s.semantic_norm}};
}

inline void merge_json(SynthSpec& s, const io::json& j) {
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("num_classes", s.num_classes);
  get("samples_per_class", s.samples_per_class);
  get("T", s.T);
  get("V", s.V);
  get("M", s.M);
  get("noise_std", s.noise_std);
  get("seed", s.seed);
  get("seen_fraction", s.seen_fraction);
  get("test_fraction", s.test_fraction);
  get("N_a", s.descriptions);
  get("d", s.dim);
  get("N_e", s.phases);
  get("semantic_norm", s.semantic_norm);
}

/// Motion template of one class; all arrays are indexed [joint*3 + axis]
/// (persons share the template, shifted apart along x).
struct ClassTemplate {
  std::vector<double> offset;
  std::vector<double> amplitude;
  std::vector<double> frequency;  // cycles per sequence
  std::vector<double> phase;

  std::vector<double> flat() const {
    std::vector<double> out;
    for (const auto* v : {&offset, &amplitude, &frequency, &phase}) out.insert(out.end(), v->begin(), v->end());
    return out;
  }

  static ClassTemplate midpoint(const ClassTemplate& a, const ClassTemplate& b) {
    auto mid = [](const std::vector<double>& x, const std::vector<double>& y) {
      std::vector<double> out(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * (x[i] + y[i]);
      return out;
    };
    return {mid(a.offset, b.offset), mid(a.amplitude, b.amplitude), mid(a.frequency, b.frequency),
            mid(a.phase, b.phase)};
  }
};

struct SynthData {
  SkeletonDataset train;   // seen classes only
  SkeletonDataset test;    // held-out seen samples + every unseen sample
  SemanticBank bank;
  SplitProtocol protocol;
  std::vector<ClassTemplate> templates;            // indexed by class id
  std::vector<std::pair<int, int>> parents;        // per class; (-1,-1) for seen classes
};

inline SkeletonSequence render(const ClassTemplate& tpl, const SynthSpec& spec, int label,
                               std::mt19937_64* noise_rng) {
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  SkeletonSequence s;
  s.label = label;
  s.coords = Tensor<float>({3, spec.T, spec.V, spec.M});
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t t = 0; t < spec.T; ++t)
      for (std::size_t v = 0; v < spec.V; ++v)
        for (std::size_t m = 0; m < spec.M; ++m) {
          const std::size_t i = v * 3 + a;
          double x = tpl.offset[i] + (a == 0 ? 1.5 * static_cast<double>(m) : 0.0) +
                     tpl.amplitude[i] * std::sin(two_pi * tpl.frequency[i] * static_cast<double>(t) /
                                                     static_cast<double>(spec.T) + tpl.phase[i]);
          if (noise_rng && spec.noise_std > 0.0) x += noise(*noise_rng);
          s.coords[((a * spec.T + t) * spec.V + v) * spec.M + m] = static_cast<float>(x);
        }
  return s;
}

inline SynthData generate(const SynthSpec& spec) {
  if (spec.num_classes < 4) throw ConfigError("need at least 4 classes for a seen/unseen split");
  if (spec.samples_per_class == 0 || spec.T == 0 || spec.V == 0 || spec.M == 0) {
    throw ConfigError("synthetic spec has a zero dimension");
  }
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");

  std::mt19937_64 rng(spec.seed);
  SynthData out;

  // Class split.
  std::vector<int> ids(spec.num_classes);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t n_seen = spec.seen_count();
  out.protocol.seen.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_seen));
  out.protocol.unseen.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_seen), ids.end());
  std::sort(out.protocol.seen.begin(), out.protocol.seen.end());
  std::sort(out.protocol.unseen.begin(), out.protocol.unseen.end());
  out.protocol.mode = EvalMode::gzsl;

  // Templates: seen ones drawn at random; unseen ones mix consecutive pairs of
  // a shuffled seen list, disjoint while the seen set lasts.
  const std::size_t P = spec.V * 3;
  std::uniform_real_distribution<double> offset(-1.0, 1.0), amp(0.1, 0.6), freq(0.5, 3.0),
      phase(0.0, 2.0 * std::numbers::pi);
  out.templates.resize(spec.num_classes);
  out.parents.assign(spec.num_classes, {-1, -1});
  for (int y : out.protocol.seen) {
    ClassTemplate t;
    for (std::size_t i = 0; i < P; ++i) {
      t.offset.push_back(offset(rng));
      t.amplitude.push_back(amp(rng));
      t.frequency.push_back(freq(rng));
      t.phase.push_back(phase(rng));
    }
    out.templates[static_cast<std::size_t>(y)] = std::move(t);
  }
  std::vector<int> pool = out.protocol.seen;
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t k = 0; k < out.protocol.unseen.size(); ++k) {
    const int a = pool[(2 * k) % pool.size()];
    const int b = pool[(2 * k + 1) % pool.size()];
    const int u = out.protocol.unseen[k];
    out.parents[static_cast<std::size_t>(u)] = {std::min(a, b), std::max(a, b)};
    out.templates[static_cast<std::size_t>(u)] =
        ClassTemplate::midpoint(out.templates[static_cast<std::size_t>(a)], out.templates[static_cast<std::size_t>(b)]);
  }

  // Semantics: a random linear embedding of each class's rest pose,
  // standardised with seen-class statistics. One projection per stream.
  std::vector<std::vector<double>> desc(spec.num_classes);
  for (std::size_t y = 0; y < spec.num_classes; ++y) desc[y] = out.templates[y].offset;
  const std::size_t theta = desc.front().size();
  std::vector<double> mu(theta, 0.0), sd(theta, 0.0);
  for (int y : out.protocol.seen)
    for (std::size_t c = 0; c < theta; ++c) mu[c] += desc[static_cast<std::size_t>(y)][c] / static_cast<double>(n_seen);
  for (int y : out.protocol.seen)
    for (std::size_t c = 0; c < theta; ++c) {
      const double dv = desc[static_cast<std::size_t>(y)][c] - mu[c];
      sd[c] += dv * dv / static_cast<double>(n_seen);
    }
  for (auto& v : sd) v = std::sqrt(v) + 1e-9;

  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(theta)));
  auto projection = [&] {
    std::vector<double> E(spec.dim * theta);
    for (auto& x : E) x = normal(rng);
    return E;
  };
  const std::vector<double> Es = projection(), Et = projection();
  auto embed = [&](const std::vector<double>& E, const std::vector<double>& raw) {
    std::vector<double> z(spec.dim, 0.0);
    for (std::size_t r = 0; r < spec.dim; ++r)
      for (std::size_t c = 0; c < theta; ++c) z[r] += E[r * theta + c] * (raw[c] - mu[c]) / sd[c];
    double n = 0;
    for (double x : z) n += x * x;
    n = std::sqrt(n) / spec.semantic_norm;
    for (auto& x : z) x /= n;
    return z;
  };
  std::vector<std::vector<double>> zs, zt;
  std::vector<int> all(spec.num_classes);
  for (std::size_t y = 0; y < spec.num_classes; ++y) {
    all[y] = static_cast<int>(y);
    zs.push_back(embed(Es, desc[y]));
    zt.push_back(embed(Et, desc[y]));
  }
  BankNoise noise;
  noise.phase_scale *= spec.semantic_norm;
  noise.description_std *= spec.semantic_norm;
  out.bank = expand_bank(all, zs, zt, spec.phases, spec.descriptions, noise, rng);

  // Samples. Each class draws its jitter from its own derived stream.
  for (auto* ds : {&out.train, &out.test}) {
    ds->T = spec.T;
    ds->V = spec.V;
    ds->M = spec.M;
  }
  const auto held_out = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.samples_per_class)));
  for (std::size_t y = 0; y < spec.num_classes; ++y) {
    std::mt19937_64 class_rng(spec.seed ^ (0x9e3779b97f4a7c15ull * (y + 1)));
    const bool seen = out.protocol.is_seen(static_cast<int>(y));
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      SkeletonSequence s = render(out.templates[y], spec, static_cast<int>(y), &class_rng);
      const bool to_test = !seen || i >= spec.samples_per_class - held_out;
      (to_test ? out.test : out.train).samples.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace neuron
