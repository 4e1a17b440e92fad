// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace neuron;
using Catch::Approx;

TEST_CASE("parameters keep insertion order and unique names") {
  Parameters<double> p;
  p.add("b", Tensor<double>({2}));
  p.add("a", Tensor<double>({3}));
  CHECK_THROWS_AS(p.add("a", Tensor<double>({1})), ContractError);
  CHECK_THROWS_AS(p.at("zz"), LookupError);
  std::vector<std::string> names;
  for (const auto& [name, _] : p) names.push_back(name);
  CHECK(names == std::vector<std::string>{"b", "a"});
  CHECK(p.element_count() == 5);
  auto f = p.cast<float>();
  CHECK(f.at("a").shape() == Shape{3});

  Graph<double> g;
  Bound<double> bound(g, p);
  CHECK_THROWS_AS(bound["missing"], LookupError);
}

TEST_CASE("mlp init is seeded with zero biases and variance-preserving bounds") {
  std::mt19937_64 r1(5), r2(5);
  Parameters<double> a, b;
  add_mlp(a, "m", MlpShape{12, 7, 3}, r1);
  add_mlp(b, "m", MlpShape{12, 7, 3}, r2);
  CHECK(a == b);
  for (double v : a.at("m.b1").data()) CHECK(v == 0.0);
  for (double v : a.at("m.b2").data()) CHECK(v == 0.0);
  CHECK(a.at("m.w1").max_abs() <= std::sqrt(3.0 / 12.0));
  CHECK(a.at("m.w2").max_abs() <= std::sqrt(3.0 / 7.0));
}

TEST_CASE("mlp is affine, tanh, affine") {
  std::mt19937_64 rng(3);
  Parameters<double> params;
  add_mlp(params, "m", MlpShape{4, 5, 2}, rng);
  auto x = testing::random_tensor({3, 4}, rng);
  Graph<double> g;
  Bound<double> p(g, params);
  auto y = mlp(p, "m", g.constant(x)).value();
  const auto &w1 = params.at("m.w1"), &w2 = params.at("m.w2");
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> h(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < 4; ++i) s += x(r, i) * w1(i, j);
      h[j] = std::tanh(s);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += h[j] * w2(j, k);
      CHECK(y(r, k) == Approx(s).margin(1e-14));
    }
  }
  auto lin = mlp(p, "m", g.constant(x), Activation::identity).value();
  CHECK_FALSE(lin == y);
}

TEST_CASE("column mlp equals the row mlp on the transpose") {
  std::mt19937_64 rng(13);
  Parameters<double> params;
  add_mlp(params, "m", MlpShape{4, 6, 4}, rng);
  params.at("m.b1") = testing::random_tensor({6}, rng);
  params.at("m.b2") = testing::random_tensor({4}, rng);
  auto x = testing::random_tensor({4, 7}, rng);
  Graph<double> g;
  Bound<double> p(g, params);
  auto a = column_mlp_apply(p, "m", g.constant(x)).value();
  auto b = map_columns(g.constant(x), [&](Var<double> r) { return mlp(p, "m", r); }).value();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Approx(b[i]).margin(1e-14));

  auto report = grad_check(params, [&](Graph<double>& gg, const Bound<double>& pp) {
    return sum(multiply(column_mlp_apply(pp, "m", gg.constant(x)), gg.constant(x)));
  }, 1e-5);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("grad_check reports the worst coordinate") {
  Parameters<double> params;
  params.add("w", Tensor<double>::vector({0.5, -1.0}));
  // Deliberately wrong backward: claims d/dw = 0 for a nonlinear op.
  auto broken = [](Graph<double>& g, const Bound<double>& p) {
    Var<double> w = p["w"];
    Tensor<double> v = w.value();
    for (auto& x : v.data()) x = x * x;
    return sum(g.op(std::move(v), {w.id()}, [](Graph<double>&, std::size_t) {}));
  };
  auto r = grad_check(params, broken, 1e-5);
  CHECK(r.max_rel_error == Approx(1.0));
  CHECK(r.worst_param == "w");
  CHECK(r.coordinates == 2);
  CHECK(r.numeric == Approx(1.0).epsilon(1e-6));
}
