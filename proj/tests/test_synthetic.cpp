// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace neuron;
using Catch::Approx;

namespace {

double sq_distance(const Tensor<float>& a, const Tensor<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

int nearest_template(const SkeletonSequence& x, const SynthData& data, const SynthSpec& spec) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < data.templates.size(); ++y) {
    const double d = sq_distance(x.coords, render(data.templates[y], spec, 0, nullptr).coords);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(y);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  SynthSpec spec;
  spec.samples_per_class = 5;
  spec.seed = 11;
  auto a = generate(spec), b = generate(spec);
  CHECK(a.bank == b.bank);
  CHECK(a.protocol.seen == b.protocol.seen);
  REQUIRE(a.train.samples.size() == b.train.samples.size());
  for (std::size_t i = 0; i < a.train.samples.size(); ++i) CHECK(a.train.samples[i].coords == b.train.samples[i].coords);
  spec.seed = 12;
  CHECK_FALSE(generate(spec).bank == a.bank);
}

TEST_CASE("zero noise makes every sample of a class identical") {
  SynthSpec spec;
  spec.noise_std = 0.0;
  spec.samples_per_class = 4;
  auto data = generate(spec);
  std::map<int, const SkeletonSequence*> first;
  for (const auto* ds : {&data.train, &data.test})
    for (const auto& s : ds->samples) {
      auto [it, fresh] = first.emplace(s.label, &s);
      if (!fresh) CHECK(s.coords == it->second->coords);
    }
  CHECK(first.size() == spec.num_classes);
}

TEST_CASE("unseen templates are midpoints of two seen parents") {
  SynthSpec spec;
  spec.samples_per_class = 2;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    spec.seed = seed;
    auto data = generate(spec);
    for (int u : data.protocol.unseen) {
      auto [a, b] = data.parents[static_cast<std::size_t>(u)];
      REQUIRE(data.protocol.is_seen(a));
      REQUIRE(data.protocol.is_seen(b));
      CHECK(a != b);
      auto ta = data.templates[static_cast<std::size_t>(a)].flat();
      auto tb = data.templates[static_cast<std::size_t>(b)].flat();
      auto tu = data.templates[static_cast<std::size_t>(u)].flat();
      for (std::size_t i = 0; i < tu.size(); ++i) CHECK(tu[i] == Approx((ta[i] + tb[i]) / 2).margin(1e-15));
    }
    for (int s : data.protocol.seen) CHECK(data.parents[static_cast<std::size_t>(s)].first == -1);
  }
}

TEST_CASE("split covers every class exactly once") {
  SynthSpec spec;
  spec.samples_per_class = 10;
  auto data = generate(spec);
  CHECK(data.protocol.seen.size() == 8);
  CHECK(data.protocol.unseen.size() == 4);
  std::set<int> all(data.protocol.seen.begin(), data.protocol.seen.end());
  for (int u : data.protocol.unseen) CHECK(all.insert(u).second);
  CHECK(all.size() == 12);
  for (const auto& s : data.train.samples) CHECK(data.protocol.is_seen(s.label));
  CHECK(data.train.samples.size() == 8 * 8);
  CHECK(data.test.samples.size() == 8 * 2 + 4 * 10);
  CHECK(data.bank.classes().size() == 12);

  spec.num_classes = 3;
  CHECK_THROWS_AS(generate(spec), ConfigError);
}

TEST_CASE("nearest template recovers every label") {
  SynthSpec spec;
  spec.samples_per_class = 6;
  spec.noise_std = 0.0;
  auto clean = generate(spec);
  for (const auto& s : clean.test.samples) CHECK(nearest_template(s, clean, spec) == s.label);

  spec.noise_std = 0.05;
  auto noisy = generate(spec);
  for (const auto& s : noisy.train.samples) CHECK(nearest_template(s, noisy, spec) == s.label);
}

TEST_CASE("semantic vectors have the configured length") {
  SynthSpec spec;
  spec.samples_per_class = 1;
  spec.semantic_norm = 2.5;
  spec.descriptions = 1;
  auto data = generate(spec);
  // The finest phase carries the smallest perturbation.
  for (int y : data.bank.classes()) {
    auto z = data.bank.pool_class(y, Stream::spatial, 2);
    double n = 0;
    for (double v : z.data()) n += v * v;
    CHECK(std::sqrt(n) == Approx(2.5).epsilon(0.1));
  }
}
