// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace neuron;
using Catch::Approx;

namespace {

void zero_heads(Parameters<double>& params) {
  for (auto& [name, t] : params)
    if (name.rfind("head.", 0) == 0 && (name.ends_with(".w2") || name.ends_with(".b2")))
      for (auto& v : t.data()) v = 0.0;
}

PhaseFeatures<double> random_features(Graph<double>& g, std::size_t C, std::size_t phases, std::mt19937_64& rng) {
  PhaseFeatures<double> x;
  for (std::size_t e = 0; e < phases; ++e) {
    x.spatial.push_back(g.constant(testing::random_tensor({C}, rng)));
    x.temporal.push_back(g.constant(testing::random_tensor({C}, rng)));
  }
  return x;
}

}  // namespace

TEST_CASE("pool_prototype examples") {
  std::mt19937_64 rng(1);
  Graph<double> g;
  auto one = testing::random_tensor({4, 1}, rng);
  auto x = pool_prototype(g.constant(one)).value();
  for (std::size_t c = 0; c < 4; ++c) CHECK(x[c] == one(c, 0));

  auto v = testing::random_tensor({3, 1}, rng);
  Tensor<double> sym({3, 2});
  for (std::size_t c = 0; c < 3; ++c) {
    sym(c, 0) = v[c];
    sym(c, 1) = -v[c];
  }
  auto z = pool_prototype(g.constant(sym)).value();
  for (double val : z.data()) CHECK(val == 0.0);

  auto r = testing::random_tensor({3, 4}, rng);
  auto m = pool_prototype(g.constant(r)).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::size_t n = 0; n < 4; ++n) s += r(c, n);
    CHECK(m[c] == Approx(s / 4).margin(1e-15));
  }
}

TEST_CASE("phase_loss closed forms") {
  std::mt19937_64 rng(2);
  auto cfg = testing::tiny_model();
  auto bank = synth_bank(5, 2, cfg.d, 2);
  auto params = init_parameters<double>(cfg, 2);
  zero_heads(params);
  Graph<double> g;
  Bound<double> p(g, params);
  auto X = g.constant(testing::random_tensor({3}, rng));
  const std::vector<int> seen{0, 2, 3};
  auto loss = phase_loss(p, "head.s0", X, "psi", bank, 2, 0, Stream::spatial, seen);
  CHECK(loss.value()[0] == Approx(std::log(3.0)).epsilon(1e-14));
  CHECK_THROWS_AS(phase_loss(p, "head.s0", X, "psi", bank, 1, 0, Stream::spatial, seen), ContractError);

  Graph<double> h;
  auto logits = h.constant(Tensor<double>::vector({1.0, 0.0}));
  CHECK(cross_entropy(logits, 0).value()[0] == Approx(std::log1p(std::exp(-1.0))).epsilon(1e-14));
  CHECK(cross_entropy(logits, 0).value()[0] == Approx(0.3133).margin(5e-5));

  double previous = std::numeric_limits<double>::infinity();
  for (double big : {0.0, 1.0, 4.0, 16.0, 64.0}) {
    const double l = cross_entropy(h.constant(Tensor<double>::vector({big, 0.3, -0.2})), 0).value()[0];
    CHECK(l >= 0.0);
    CHECK(l < previous);
    previous = l;
  }
  CHECK(previous < 1e-20);
}

TEST_CASE("total_loss with zero-output heads is six times ln 8") {
  auto cfg = testing::tiny_model();
  auto bank = synth_bank(10, 2, cfg.d, 3);
  auto params = init_parameters<double>(cfg, 3);
  zero_heads(params);
  Graph<double> g;
  Bound<double> p(g, params);
  std::mt19937_64 rng(3);
  ClassEmbeddings<double> targets(p, bank, {0, 1, 2, 3, 4, 5, 6, 7});
  auto out = forward(p, cfg, testing::random_sequence(cfg.encoder, 5, rng));
  CHECK(total_loss(p, out.pooled, targets, 5).value()[0] == Approx(6 * std::log(8.0)).margin(1e-12));
  CHECK(6 * std::log(8.0) == Approx(12.4766).margin(5e-5));
}

TEST_CASE("total_loss recomposes from six phase losses") {
  auto cfg = testing::tiny_model();
  auto bank = synth_bank(4, 2, cfg.d, 4);
  auto params = init_parameters<double>(cfg, 4);
  std::mt19937_64 rng(4);
  Graph<double> g;
  Bound<double> p(g, params);
  const std::vector<int> seen{0, 1, 3};
  ClassEmbeddings<double> targets(p, bank, seen);
  for (int y : seen) {
    auto x = random_features(g, 3, 3, rng);
    double parts = 0, spatial = 0, temporal = 0;
    for (std::size_t e = 0; e < 3; ++e) {
      const double ls = phase_loss(p, head_name(Stream::spatial, e, false), x.spatial[e], "psi", bank, y, e,
                                   Stream::spatial, seen).value()[0];
      const double lt = phase_loss(p, head_name(Stream::temporal, e, false), x.temporal[e], "psi", bank, y, e,
                                   Stream::temporal, seen).value()[0];
      CHECK(ls >= 0.0);
      CHECK(lt >= 0.0);
      spatial += ls;
      temporal += lt;
      parts += ls + lt;
    }
    CHECK(total_loss(p, x, targets, y).value()[0] == Approx(parts).epsilon(1e-13));
    CHECK(total_loss(p, x, targets, y, false, 1.0, StreamSelection::spatial_only).value()[0] ==
          Approx(spatial).epsilon(1e-13));
    CHECK(total_loss(p, x, targets, y, false, 1.0, StreamSelection::temporal_only).value()[0] ==
          Approx(temporal).epsilon(1e-13));
  }
  auto short_x = random_features(g, 3, 2, rng);
  CHECK_THROWS_AS(total_loss(p, short_x, targets, 0), ContractError);
}

TEST_CASE("shared heads use one parameter set per stream") {
  auto cfg = testing::tiny_model();
  cfg.shared_heads = true;
  auto params = init_parameters<double>(cfg, 5);
  CHECK(params.contains("head.s.w1"));
  CHECK_FALSE(params.contains("head.s1.w1"));
  CHECK(head_name(Stream::temporal, 2, false) == "head.t2");
  CHECK(head_name(Stream::temporal, 2, true) == "head.t");
}

TEST_CASE("full forward pass passes the gradient check") {
  auto fixture = make_gradcheck_fixture(0);
  auto report = check_fixture(fixture);
  CHECK(report.coordinates == fixture.params.element_count());
  CHECK(report.max_rel_error < 1e-5);

  // Other fixtures: the worst coordinate is a gradient near 1e-7, where
  // rounding in the difference quotient sets the floor.
  for (std::uint64_t seed = 1; seed < 4; ++seed) CHECK(check_fixture(make_gradcheck_fixture(seed)).max_rel_error < 1e-4);
}
