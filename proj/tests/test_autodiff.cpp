// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <functional>

#include "support.hpp"

using namespace neuron;
using Catch::Approx;

namespace {

using Op = std::function<Var<double>(const Bound<double>&)>;

struct OpCase {
  const char* name;
  std::vector<std::pair<std::string, Shape>> inputs;
  Op apply;
  bool positive = false;  // inputs drawn from (0.5, 2) instead of (-1, 1)
};

std::vector<OpCase> op_cases() {
  return {
      {"matmul", {{"a", {3, 4}}, {"b", {4, 2}}}, [](const Bound<double>& p) { return matmul(p["a"], p["b"]); }},
      {"transpose", {{"a", {3, 2}}}, [](const Bound<double>& p) { return transpose(p["a"]); }},
      {"reshape", {{"a", {3, 2}}}, [](const Bound<double>& p) { return reshape(p["a"], {2, 3}); }},
      {"slice_rows", {{"a", {4, 3}}}, [](const Bound<double>& p) { return slice_rows(p["a"], 1, 2); }},
      {"add_tiled_rows", {{"a", {4, 3}}, {"b", {2, 3}}},
       [](const Bound<double>& p) { return add_tiled_rows(p["a"], p["b"]); }},
      {"add", {{"a", {2, 3}}, {"b", {2, 3}}}, [](const Bound<double>& p) { return add(p["a"], p["b"]); }},
      {"multiply", {{"a", {2, 3}}, {"b", {2, 3}}}, [](const Bound<double>& p) { return multiply(p["a"], p["b"]); }},
      {"multiply_const", {{"a", {2, 3}}},
       [](const Bound<double>& p) {
         return multiply_const(p["a"], Tensor<double>::matrix(2, 3, {1, 0, -2, 0.5, 3, 0}));
       }},
      {"scale", {{"a", {5}}}, [](const Bound<double>& p) { return scale(p["a"], 2.5); }},
      {"negate", {{"a", {5}}}, [](const Bound<double>& p) { return negate(p["a"]); }},
      {"sigmoid", {{"a", {2, 3}}}, [](const Bound<double>& p) { return sigmoid(scale(p["a"], 3.0)); }},
      {"tanh", {{"a", {2, 3}}}, [](const Bound<double>& p) { return tanh(scale(p["a"], 2.0)); }},
      {"exp", {{"a", {4}}}, [](const Bound<double>& p) { return exp(p["a"]); }},
      {"log", {{"a", {4}}}, [](const Bound<double>& p) { return log(p["a"]); }, true},
      {"softmax0", {{"a", {3, 4}}}, [](const Bound<double>& p) { return softmax(scale(p["a"], 2.0), 0); }},
      {"softmax1", {{"a", {3, 4}}}, [](const Bound<double>& p) { return softmax(scale(p["a"], 2.0), 1); }},
      {"mean_pool0", {{"a", {2, 3, 4}}}, [](const Bound<double>& p) { return mean_pool(p["a"], 0); }},
      {"mean_pool1", {{"a", {2, 3, 4}}}, [](const Bound<double>& p) { return mean_pool(p["a"], 1); }},
      {"sum", {{"a", {3, 2}}}, [](const Bound<double>& p) { return sum(p["a"]); }},
      {"add_n", {{"a", {3}}, {"b", {3}}, {"c", {3}}},
       [](const Bound<double>& p) { return add_n(std::vector<Var<double>>{p["a"], p["b"], p["c"], p["a"]}); }},
      {"cross_entropy", {{"a", {5}}}, [](const Bound<double>& p) { return cross_entropy(scale(p["a"], 3.0), 2); }},
      {"affine", {{"x", {3, 4}}, {"w", {4, 2}}, {"b", {2}}},
       [](const Bound<double>& p) { return affine(p["x"], p["w"], p["b"]); }},
      {"affine_vec", {{"x", {4}}, {"w", {4, 2}}, {"b", {2}}},
       [](const Bound<double>& p) { return affine(p["x"], p["w"], p["b"]); }},
      {"column_affine", {{"x", {4, 3}}, {"w", {4, 2}}, {"b", {2}}},
       [](const Bound<double>& p) { return column_affine(p["x"], p["w"], p["b"]); }},
  };
}

/// sum(op(inputs) * R) for a fixed random weighting R, so every output
/// coordinate contributes with a different weight.
GradCheckReport check_op(const OpCase& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters<double> params;
  for (const auto& [name, shape] : c.inputs) {
    params.add(name, c.positive ? testing::random_tensor(shape, rng, 0.5, 2.0) : testing::random_tensor(shape, rng));
  }
  Tensor<double> weights;
  {
    Graph<double> g;
    Bound<double> p(g, params);
    weights = testing::random_tensor(c.apply(p).shape(), rng);
  }
  return grad_check(params, [&](Graph<double>&, const Bound<double>& p) {
    return sum(multiply_const(c.apply(p), weights));
  }, 1e-4);
}

}  // namespace

TEST_CASE("softmax examples") {
  Graph<double> g;
  auto u = softmax(g.constant(Tensor<double>::vector({4, 4, 4, 4})), 0).value();
  for (double v : u.data()) CHECK(v == Approx(0.25).epsilon(1e-15));

  auto two = softmax(g.constant(Tensor<double>::vector({0.0, std::log(2.0)})), 0).value();
  CHECK(two[0] == Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(two[1] == Approx(2.0 / 3.0).epsilon(1e-14));

  std::mt19937_64 rng(3);
  auto x = testing::random_tensor({3, 5}, rng, -4, 4);
  Tensor<double> shifted = x;
  for (auto& v : shifted.data()) v += 123.0;
  auto a = softmax(g.constant(x), 1).value();
  auto b = softmax(g.constant(shifted), 1).value();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Approx(b[i]).margin(1e-12));
}

TEST_CASE("softmax slices are distributions, including extreme logits") {
  std::mt19937_64 rng(5);
  Graph<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    auto x = testing::random_tensor({4, 6}, rng, -800, 800);
    for (std::size_t axis : {0u, 1u}) {
      auto s = softmax(g.constant(x), axis).value();
      REQUIRE(s.all_finite());
      const std::size_t outer = axis == 0 ? 6 : 4, len = axis == 0 ? 4 : 6;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0;
        for (std::size_t l = 0; l < len; ++l) {
          const double v = axis == 0 ? s(l, o) : s(o, l);
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          total += v;
        }
        CHECK(total == Approx(1.0).margin(1e-6));
      }
    }
  }
  CHECK_THROWS_AS(softmax(g.constant(Tensor<double>({2, 2})), 2), DimensionError);
}

TEST_CASE("elementwise examples") {
  Graph<double> g;
  auto zero = g.constant(Tensor<double>::vector({0.0}));
  auto one = g.constant(Tensor<double>::vector({1.0}));
  CHECK(elementwise(Elementwise::sigmoid, zero).value()[0] == 0.5);
  CHECK(elementwise(Elementwise::sigmoid, one).value()[0] == Approx(0.7310586).margin(5e-8));
  CHECK(1.0 / (1.0 + std::exp(-1.0)) == Approx(0.7310586).margin(5e-8));

  std::mt19937_64 rng(9);
  auto x = g.constant(testing::random_tensor({3, 3}, rng));
  auto nx = elementwise(Elementwise::negate, x);
  auto z = elementwise(Elementwise::add, x, &nx).value();
  for (double v : z.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(elementwise(Elementwise::log, g.constant(Tensor<double>::vector({1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(elementwise(Elementwise::log, g.constant(Tensor<double>::vector({-2.0}))), DomainError);
  CHECK_THROWS_AS(elementwise(Elementwise::multiply, x), ContractError);
  auto y = g.constant(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(elementwise(Elementwise::add, x, &y), DimensionError);
}

TEST_CASE("sigmoid stays finite and saturates at large magnitude") {
  Graph<float> g;
  auto s = sigmoid(g.constant(Tensor<float>::vector({-200.f, -30.f, 30.f, 200.f}))).value();
  REQUIRE(s.all_finite());
  CHECK(s[0] >= 0.f);
  CHECK(s[0] < 1e-12f);
  CHECK(s[3] == 1.f);
}

TEST_CASE("float tanh agrees with the library within a few ulps") {
  Graph<float> g;
  Tensor<float> x({2001});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = -10.f + 0.01f * static_cast<float>(i);
  auto t = tanh(g.constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(t[i] == Approx(std::tanh(x[i])).margin(4e-7));
}

TEST_CASE("mean_pool examples and gradient") {
  Graph<double> g;
  auto c = mean_pool(g.constant(Tensor<double>({2, 3, 4}, 1.75)), 1).value();
  CHECK(c.shape() == Shape{2, 4});
  for (double v : c.data()) CHECK(v == 1.75);
  CHECK(mean_pool(g.constant(Tensor<double>::vector({1, 2, 3})), 0).value()[0] == 2.0);

  Parameters<double> params;
  params.add("x", Tensor<double>({3, 5}, 0.3));
  Graph<double> g2;
  Bound<double> p(g2, params);
  auto grads = g2.backward(sum(mean_pool(p["x"], 1)));
  for (double v : grads.at("x").data()) CHECK(v == Approx(0.2).epsilon(1e-15));
}

TEST_CASE("affine examples") {
  Graph<double> g;
  std::mt19937_64 rng(2);
  auto X = testing::random_tensor({3, 2}, rng);
  auto I = g.constant(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}));
  auto z2 = g.constant(Tensor<double>({2}, 0.0));
  CHECK(affine(g.constant(X), I, z2).value() == X);

  auto y = affine(g.constant(Tensor<double>::matrix(1, 2, {1, 2})), g.constant(Tensor<double>::matrix(2, 1, {1, 1})),
                  g.constant(Tensor<double>::vector({3})));
  CHECK(y.value()[0] == 6.0);

  auto zw = g.constant(Tensor<double>({2, 4}, 0.0));
  auto zb = g.constant(Tensor<double>({4}, 0.0));
  for (double v : affine(g.constant(X), zw, zb).value().data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(affine(g.constant(X), g.constant(Tensor<double>({3, 2})), z2), DimensionError);
  CHECK_THROWS_AS(affine(g.constant(X), I, g.constant(Tensor<double>({3}))), DimensionError);
}

TEST_CASE("column_affine equals affine on the transpose") {
  std::mt19937_64 rng(4);
  Graph<double> g;
  auto x = g.constant(testing::random_tensor({4, 5}, rng));
  auto w = g.constant(testing::random_tensor({4, 3}, rng));
  auto b = g.constant(testing::random_tensor({3}, rng));
  auto a = column_affine(x, w, b).value();
  auto r = transposed(affine(transpose(x), w, b).value());
  REQUIRE(a.shape() == Shape{3, 5});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Approx(r[i]).margin(1e-14));
  CHECK_THROWS_AS(column_affine(transpose(x), w, b), DimensionError);
}

TEST_CASE("backward examples") {
  Parameters<double> params;
  params.add("x", Tensor<double>::vector({3.0}));
  params.add("unused", Tensor<double>::vector({1.0, 2.0}));
  Graph<double> g;
  Bound<double> p(g, params);
  auto grads = g.backward(sum(multiply(p["x"], p["x"])));
  CHECK(grads.at("x")[0] == 6.0);
  CHECK(grads.at("unused")[0] == 0.0);
  CHECK(grads.at("unused")[1] == 0.0);

  CHECK_THROWS_AS(g.backward(p["unused"]), ContractError);
}

TEST_CASE("matmul gradient of sum(AB) is ones times B transpose") {
  std::mt19937_64 rng(8);
  Parameters<double> params;
  params.add("A", testing::random_tensor({3, 4}, rng));
  params.add("B", testing::random_tensor({4, 2}, rng));
  Graph<double> g;
  Bound<double> p(g, params);
  auto grads = g.backward(sum(matmul(p["A"], p["B"])));
  const auto& B = params.at("B");
  const auto& gA = grads.at("A");
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t l = 0; l < 4; ++l) CHECK(gA(i, l) == Approx(B(l, 0) + B(l, 1)).epsilon(1e-15));
}

TEST_CASE("cross-entropy logit gradient is softmax minus one-hot") {
  std::mt19937_64 rng(12);
  Parameters<double> params;
  params.add("z", testing::random_tensor({6}, rng, -3, 3));
  const std::size_t target = 4;
  Graph<double> g;
  Bound<double> p(g, params);
  auto grads = g.backward(cross_entropy(p["z"], target));
  auto probs = softmax(g.constant(params.at("z")), 0).value();

  // Independent central differences with step 1e-5.
  auto loss_at = [&](const Tensor<double>& z) {
    double mx = z[0];
    for (double v : z.data()) mx = std::max(mx, v);
    double s = 0;
    for (double v : z.data()) s += std::exp(v - mx);
    return mx + std::log(s) - z[target];
  };
  for (std::size_t i = 0; i < 6; ++i) {
    Tensor<double> zp = params.at("z"), zm = params.at("z");
    zp[i] += 1e-5;
    zm[i] -= 1e-5;
    const double fd = (loss_at(zp) - loss_at(zm)) / 2e-5;
    const double expected = probs[i] - (i == target ? 1.0 : 0.0);
    CHECK(grads.at("z")[i] == Approx(expected).margin(1e-12));
    CHECK(fd == Approx(expected).margin(1e-8));
  }
}

TEST_CASE("grad_check is exact on a linear loss and rejects a zero step") {
  std::mt19937_64 rng(1);
  Parameters<double> params;
  params.add("w", testing::random_tensor({4, 3}, rng));
  auto c = testing::random_tensor({4, 3}, rng);
  auto build = [&](Graph<double>&, const Bound<double>& p) { return sum(multiply_const(p["w"], c)); };
  CHECK(grad_check(params, build, 1e-3).max_rel_error < 1e-10);
  CHECK_THROWS_AS(grad_check(params, build, 0.0), ContractError);
  CHECK_THROWS_AS(grad_check(params, build, -1e-6), ContractError);
}

TEST_CASE("every op passes the finite-difference check over 100 seeds") {
  const auto cases = op_cases();
  for (const auto& c : cases) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) worst = std::max(worst, check_op(c, seed).max_rel_error);
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("forward passes are bit-deterministic") {
  std::mt19937_64 rng(21);
  Parameters<double> params;
  params.add("x", testing::random_tensor({3, 4}, rng));
  params.add("w", testing::random_tensor({4, 4}, rng));
  auto run = [&] {
    Graph<double> g;
    Bound<double> p(g, params);
    auto h = softmax(tanh(matmul(p["x"], p["w"])), 1);
    return std::pair{h.value(), g.backward(sum(multiply(h, h)))};
  };
  auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("graph contract errors") {
  Graph<double> g1, g2;
  auto a = g1.constant(Tensor<double>({2}));
  auto b = g2.constant(Tensor<double>({2}));
  CHECK_THROWS_AS(add(a, b), ContractError);
  g1.parameter("w", Tensor<double>({1}));
  CHECK_THROWS_AS(g1.parameter("w", Tensor<double>({1})), ContractError);
  CHECK_THROWS_AS(add_n(std::vector<Var<double>>{}), ContractError);
  CHECK_THROWS_AS(cross_entropy(a, 2), ContractError);
  CHECK_THROWS_AS(slice_rows(g1.constant(Tensor<double>({3, 2})), 2, 2), DimensionError);
}
