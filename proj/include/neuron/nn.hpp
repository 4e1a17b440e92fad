// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "neuron/autodiff.hpp"

namespace neuron {

/// Ordered, uniquely named set of trainable tensors. Insertion order is the
/// canonical order used by checkpoints and gradient checks.
template <class T>
class Parameters {
 public:
  void add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(value));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) { return entries_[lookup(name)].second; }
  const Tensor<T>& at(const std::string& name) const { return entries_[lookup(name)].second; }

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  template <class U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

  friend bool operator==(const Parameters& a, const Parameters& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parameters registered as leaves of one graph, looked up by name.
template <class T>
class Bound {
 public:
  Bound(Graph<T>& g, const Parameters<T>& params) : graph_(&g) {
    for (const auto& [name, t] : params) vars_.emplace(name, g.parameter(name, t));
  }

  Var<T> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw LookupError("parameter '" + name + "' not bound");
    return it->second;
  }

  bool has(const std::string& name) const { return vars_.count(name) != 0; }

  Graph<T>& graph() const noexcept { return *graph_; }

 private:
  Graph<T>* graph_;
  std::unordered_map<std::string, Var<T>> vars_;
};

enum class Activation { tanh, identity };

struct MlpShape {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  Activation activation = Activation::tanh;
  bool output_bias = true;
};

/// Variance-preserving uniform weights (std 1/sqrt(fan_in)), zero biases.
template <class T>
void add_mlp(Parameters<T>& params, const std::string& prefix, const MlpShape& shape,
             std::mt19937_64& rng) {
  auto layer = [&](const std::string& tag, std::size_t in, std::size_t out, bool bias = true) {
    const double bound = std::sqrt(3.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> w({in, out});
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
    params.add(prefix + ".w" + tag, std::move(w));
    if (bias) params.add(prefix + ".b" + tag, Tensor<T>({out}, T{0}));
  };
  layer("1", shape.in, shape.hidden);
  layer("2", shape.hidden, shape.out, shape.output_bias);
}

/// Two-layer MLP applied row-wise: affine -> activation -> affine.
template <class T>
Var<T> mlp(const Bound<T>& p, const std::string& prefix, Var<T> x,
           Activation act = Activation::tanh) {
  Var<T> h = affine(x, p[prefix + ".w1"], p[prefix + ".b1"]);
  if (act == Activation::tanh) h = tanh(h);
  if (!p.has(prefix + ".b2")) return matmul(h, p[prefix + ".w2"]);
  return affine(h, p[prefix + ".w2"], p[prefix + ".b2"]);
}

/// The same MLP applied to every column of a [C x N] matrix.
template <class T>
Var<T> column_mlp_apply(const Bound<T>& p, const std::string& prefix, Var<T> x,
                        Activation act = Activation::tanh) {
  Var<T> h = column_affine(x, p[prefix + ".w1"], p[prefix + ".b1"]);
  if (act == Activation::tanh) h = tanh(h);
  return column_affine(h, p[prefix + ".w2"], p[prefix + ".b2"]);
}

/// Applies a row-wise map to every column of a [C x N] matrix.
template <class T, class F>
Var<T> map_columns(Var<T> x, F&& f) {
  return transpose(f(transpose(x)));
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

inline double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

/// Compares backward() against central finite differences on every
/// coordinate of every parameter. `build` maps (graph, bound params) to a
/// scalar loss node and must be a pure function of the parameter values.
template <class Build>
GradCheckReport grad_check(const Parameters<double>& params, Build&& build, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ContractError("grad_check step must be positive and finite, got " + std::to_string(eps));
  }
  auto evaluate = [&](const Parameters<double>& p) {
    Graph<double> g;
    Bound<double> bound(g, p);
    return build(g, bound).value()[0];
  };

  std::map<std::string, Tensor<double>> analytic;
  {
    Graph<double> g;
    Bound<double> bound(g, params);
    Var<double> loss = build(g, bound);
    analytic = g.backward(loss);
  }

  GradCheckReport report;
  Parameters<double> probe = params;
  for (const auto& [name, value] : params) {
    Tensor<double>& slot = probe.at(name);
    const Tensor<double>& ga = analytic.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      slot[i] = orig + eps;
      const double fp = evaluate(probe);
      slot[i] = orig - eps;
      const double fm = evaluate(probe);
      slot[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = relative_error(ga[i], numeric);
      ++report.coordinates;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = ga[i];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace neuron
