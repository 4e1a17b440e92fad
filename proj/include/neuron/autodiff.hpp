// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Graph records every operation in execution order, so the node list is a
// topological order by construction. Parameters are named leaves; backward()
// walks the tape in reverse and returns one gradient per parameter name.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "neuron/errors.hpp"
#include "neuron/tensor.hpp"

namespace neuron {

template <class T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  const Tensor<T>& value() const { return graph_->node(id_).value; }
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Graph<T>& graph() const noexcept { return *graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    std::string param_name;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var<T> parameter(const std::string& name, Tensor<T> value) {
    if (param_ids_.count(name)) {
      throw ContractError("duplicate parameter name '" + name + "'");
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = true;
    n.param_name = name;
    Var<T> v = push(std::move(n));
    param_ids_.emplace(name, v.id());
    param_order_.push_back(name);
    return v;
  }

  /// Records an operation node. The backward closure is dropped when no input
  /// requires a gradient.
  Var<T> op(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (std::size_t in : inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape(), T{0});
    return n.grad;
  }

  const std::vector<std::string>& parameter_names() const noexcept { return param_order_; }

  std::map<std::string, Tensor<T>> backward(Var<T> loss) {
    if (&loss.graph() != this) throw ContractError("loss belongs to another graph");
    if (loss.value().size() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " +
                          shape_str(loss.shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor<T>();
    if (nodes_[loss.id()].needs_grad) {
      grad(loss.id())[0] = T{1};
      for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.empty()) continue;
        n.backward(*this, i);
      }
    }
    std::map<std::string, Tensor<T>> out;
    for (const auto& name : param_order_) {
      std::size_t id = param_ids_.at(name);
      Node& n = nodes_[id];
      out.emplace(name, n.grad.empty() ? Tensor<T>(n.value.shape(), T{0}) : n.grad);
    }
    return out;
  }

 private:
  Var<T> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_ids_;
  std::vector<std::string> param_order_;
};

namespace detail {

template <class T>
void require_same_graph(const Var<T>& a, const Var<T>& b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

template <class T>
void require_same_shape(const char* what, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

template <class T>
void require_matrix(const char* what, const Var<T>& a) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(what) + " needs a matrix, got " + shape_str(a.shape()));
  }
}

/// Splits a shape around `axis` into (outer, length, inner) strides.
inline std::tuple<std::size_t, std::size_t, std::size_t> axis_split(const Shape& shape,
                                                                    std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  return {outer, shape[axis], inner};
}

template <class T, class Fwd, class Deriv>
Var<T> unary(Var<T> x, Fwd fwd, Deriv deriv) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  std::size_t xid = x.id();
  return x.graph().op(std::move(out), {xid}, [xid, deriv](Graph<T>& g, std::size_t self) {
    const auto& n = g.node(self);
    const Tensor<T>& xv = g.node(xid).value;
    Tensor<T>& gx = g.grad(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * deriv(xv[i], n.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_graph(a, b);
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions of " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()) + " disagree");
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out({m, n});
  kernels::matmul_acc(av.raw(), bv.raw(), out.raw(), m, k, n);
  std::size_t aid = a.id(), bid = b.id();
  return a.graph().op(std::move(out), {aid, bid}, [aid, bid, m, k, n](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gout = g.node(self).grad;
    if (g.needs_grad(aid)) {
      // dA = dC * B^T
      Tensor<T> bt = transposed(g.node(bid).value);
      kernels::matmul_acc(gout.raw(), bt.raw(), g.grad(aid).raw(), m, n, k);
    }
    if (g.needs_grad(bid)) {
      // dB = A^T * dC
      kernels::matmul_tn_acc(g.node(aid).value.raw(), gout.raw(), g.grad(bid).raw(), m, k, n);
    }
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  detail::require_matrix("transpose", a);
  std::size_t aid = a.id();
  return a.graph().op(transposed(a.value()), {aid}, [aid](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gout = g.node(self).grad;
    Tensor<T>& ga = g.grad(aid);
    const std::size_t r = gout.rows(), c = gout.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[j * r + i] += gout[i * c + j];
  });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  std::size_t aid = a.id();
  return a.graph().op(a.value().reshaped(std::move(shape)), {aid},
                      [aid](Graph<T>& g, std::size_t self) {
                        const Tensor<T>& gout = g.node(self).grad;
                        Tensor<T>& ga = g.grad(aid);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
                      });
}

/// Rows [begin, begin+count) of a matrix.
template <class T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count) {
  detail::require_matrix("slice_rows", a);
  const Tensor<T>& av = a.value();
  if (count == 0 || begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(av.shape()));
  }
  const std::size_t cols = av.cols();
  Tensor<T> out({count, cols});
  std::copy_n(av.raw() + begin * cols, count * cols, out.raw());
  std::size_t aid = a.id();
  return a.graph().op(std::move(out), {aid}, [aid, begin, cols](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gout = g.node(self).grad;
    T* ga = g.grad(aid).raw() + begin * cols;
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
  });
}

/// X[i] += B[i mod r] for X [m x n], B [r x n] with r dividing m.
template <class T>
Var<T> add_tiled_rows(Var<T> x, Var<T> b) {
  detail::require_same_graph(x, b);
  detail::require_matrix("add_tiled_rows", x);
  detail::require_matrix("add_tiled_rows", b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  if (xv.cols() != bv.cols() || xv.rows() % bv.rows() != 0) {
    throw DimensionError("add_tiled_rows: cannot tile " + shape_str(bv.shape()) + " over " +
                         shape_str(xv.shape()));
  }
  const std::size_t block = bv.size();
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % block];
  std::size_t xid = x.id(), bid = b.id();
  return x.graph().op(std::move(out), {xid, bid}, [xid, bid, block](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gout = g.node(self).grad;
    if (g.needs_grad(xid)) {
      Tensor<T>& gx = g.grad(xid);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
    }
    if (g.needs_grad(bid)) {
      Tensor<T>& gb = g.grad(bid);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i % block] += gout[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_graph(a, b);
  detail::require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  std::size_t aid = a.id(), bid = b.id();
  return a.graph().op(std::move(out), {aid, bid}, [aid, bid](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gout = g.node(self).grad;
    for (std::size_t id : {aid, bid}) {
      if (!g.needs_grad(id)) continue;
      Tensor<T>& gi = g.grad(id);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
    }
  });
}

template <class T>
Var<T> multiply(Var<T> a, Var<T> b) {
  detail::require_same_graph(a, b);
  detail::require_same_shape("multiply", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  std::size_t aid = a.id(), bid = b.id();
  return a.graph().op(std::move(out), {aid, bid}, [aid, bid](Graph<T>& g, std::size_t self) {
    const Tensor<T>& gout = g.node(self).grad;
    if (g.needs_grad(aid)) {
      Tensor<T>& ga = g.grad(aid);
      const Tensor<T>& bv = g.node(bid).value;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * bv[i];
    }
    if (g.needs_grad(bid)) {
      Tensor<T>& gb = g.grad(bid);
      const Tensor<T>& av = g.node(aid).value;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * av[i];
    }
  });
}

/// Elementwise product with a tensor that is a constant of the forward pass.
template <class T>
Var<T> multiply_const(Var<T> a, Tensor<T> c) {
  if (a.shape() != c.shape()) {
    throw DimensionError("multiply_const: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(c.shape()) + " differ");
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  std::size_t aid = a.id();
  return a.graph().op(std::move(out), {aid},
                      [aid, c = std::move(c)](Graph<T>& g, std::size_t self) {
                        const Tensor<T>& gout = g.node(self).grad;
                        Tensor<T>& ga = g.grad(aid);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * c[i];
                      });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  return detail::unary(a, [factor](T x) { return x * factor; },
                       [factor](T, T) { return factor; });
}

template <class T>
Var<T> negate(Var<T> a) {
  return detail::unary(a, [](T x) { return -x; }, [](T, T) { return T{-1}; });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  return detail::unary(
      a,
      [](T x) {
        const T e = std::exp(-std::abs(x));
        return (x >= T{0} ? T{1} : e) / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

namespace detail {

// libm tanhf is several times slower than expf; the exp form is accurate to a
// few float ulps, while double keeps the library call for gradient checks.
template <class T>
T tanh_value(T x) {
  if constexpr (std::is_same_v<T, float>) {
    const float e = std::exp(-2.0f * std::abs(x));
    return std::copysign((1.0f - e) / (1.0f + e), x);
  } else {
    return std::tanh(x);
  }
}

}  // namespace detail

template <class T>
Var<T> tanh(Var<T> a) {
  return detail::unary(a, [](T x) { return detail::tanh_value(x); },
                       [](T, T y) { return T{1} - y * y; });
}

template <class T>
Var<T> exp(Var<T> a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(Var<T> a) {
  for (T v : a.value().data()) {
    if (!(v > T{0})) throw DomainError("log of non-positive element " + std::to_string(v));
  }
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

enum class Elementwise { sigmoid, exp, log, negate, tanh, add, multiply };

/// Dispatching front end over the elementwise kinds.
template <class T>
Var<T> elementwise(Elementwise kind, Var<T> x, const Var<T>* y = nullptr) {
  auto need_y = [&]() -> Var<T> {
    if (!y) throw ContractError("binary elementwise kind needs a second operand");
    return *y;
  };
  switch (kind) {
    case Elementwise::sigmoid: return sigmoid(x);
    case Elementwise::exp: return exp(x);
    case Elementwise::log: return log(x);
    case Elementwise::negate: return negate(x);
    case Elementwise::tanh: return tanh(x);
    case Elementwise::add: return add(x, need_y());
    case Elementwise::multiply: return multiply(x, need_y());
  }
  throw ContractError("unknown elementwise kind");
}

// ---------------------------------------------------------------------------
// Reductions and normalisations

/// Softmax along `axis`, max-subtracted.
template <class T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const Tensor<T>& xv = x.value();
  auto [outer, len, inner] = detail::axis_split(xv.shape(), axis);
  Tensor<T> out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xv[base + l * inner]);
      T sum{0};
      for (std::size_t l = 0; l < len; ++l) {
        T e = std::exp(xv[base + l * inner] - mx);
        out[base + l * inner] = e;
        sum += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= sum;
    }
  }
  std::size_t xid = x.id();
  return x.graph().op(std::move(out), {xid},
                      [xid, outer, len, inner](Graph<T>& g, std::size_t self) {
                        const auto& n = g.node(self);
                        Tensor<T>& gx = g.grad(xid);
                        for (std::size_t o = 0; o < outer; ++o) {
                          for (std::size_t in = 0; in < inner; ++in) {
                            const std::size_t base = o * len * inner + in;
                            T dot{0};
                            for (std::size_t l = 0; l < len; ++l) {
                              const std::size_t i = base + l * inner;
                              dot += n.grad[i] * n.value[i];
                            }
                            for (std::size_t l = 0; l < len; ++l) {
                              const std::size_t i = base + l * inner;
                              gx[i] += n.value[i] * (n.grad[i] - dot);
                            }
                          }
                        }
                      });
}

/// Arithmetic mean along `axis`; the axis is removed from the shape.
/// A rank-1 input yields shape [1].
template <class T>
Var<T> mean_pool(Var<T> x, std::size_t axis) {
  const Tensor<T>& xv = x.value();
  auto [outer, len, inner] = detail::axis_split(xv.shape(), axis);
  Shape shape;
  for (std::size_t i = 0; i < xv.rank(); ++i)
    if (i != axis) shape.push_back(xv.dim(i));
  if (shape.empty()) shape.push_back(1);
  Tensor<T> out(shape);
  const T inv = T{1} / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const T* src = xv.raw() + (o * len + l) * inner;
      T* dst = out.raw() + o * inner;
      for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  std::size_t xid = x.id();
  return x.graph().op(std::move(out), {xid},
                      [xid, outer, len, inner, inv](Graph<T>& g, std::size_t self) {
                        const Tensor<T>& gout = g.node(self).grad;
                        Tensor<T>& gx = g.grad(xid);
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t l = 0; l < len; ++l)
                            for (std::size_t in = 0; in < inner; ++in)
                              gx[(o * len + l) * inner + in] += gout[o * inner + in] * inv;
                      });
}

/// Sum of all elements as a [1] tensor.
template <class T>
Var<T> sum(Var<T> x) {
  T s{0};
  for (T v : x.value().data()) s += v;
  std::size_t xid = x.id();
  return x.graph().op(Tensor<T>::scalar(s), {xid}, [xid](Graph<T>& g, std::size_t self) {
    const T go = g.node(self).grad[0];
    Tensor<T>& gx = g.grad(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
  });
}

/// Sum of same-shaped terms, accumulated left to right.
template <class T>
Var<T> add_n(const std::vector<Var<T>>& terms) {
  if (terms.empty()) throw ContractError("add_n of an empty list");
  Tensor<T> out = terms.front().value();
  std::vector<std::size_t> ids{terms.front().id()};
  for (std::size_t t = 1; t < terms.size(); ++t) {
    detail::require_same_shape("add_n", terms.front(), terms[t]);
    const Tensor<T>& v = terms[t].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    ids.push_back(terms[t].id());
  }
  std::vector<std::size_t> inputs = ids;
  return terms.front().graph().op(std::move(out), std::move(inputs),
                                  [ids](Graph<T>& g, std::size_t self) {
                                    const Tensor<T>& gout = g.node(self).grad;
                                    for (std::size_t id : ids) {
                                      if (!g.needs_grad(id)) continue;
                                      Tensor<T>& gi = g.grad(id);
                                      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
                                    }
                                  });
}

/// -log softmax(logits)[target] for a logit vector, via log-sum-exp.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::size_t target) {
  const Tensor<T>& lv = logits.value();
  if (target >= lv.size()) {
    throw ContractError("cross_entropy target " + std::to_string(target) + " outside " +
                        std::to_string(lv.size()) + " logits");
  }
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : lv.data()) mx = std::max(mx, v);
  T s{0};
  for (T v : lv.data()) s += std::exp(v - mx);
  const T lse = mx + std::log(s);
  const T loss = lse - lv[target];
  std::size_t lid = logits.id();
  return logits.graph().op(Tensor<T>::scalar(loss), {lid},
                           [lid, lse, target](Graph<T>& g, std::size_t self) {
                             const T go = g.node(self).grad[0];
                             const Tensor<T>& lv = g.node(lid).value;
                             Tensor<T>& gl = g.grad(lid);
                             for (std::size_t i = 0; i < gl.size(); ++i) {
                               T p = std::exp(lv[i] - lse);
                               gl[i] += go * (p - (i == target ? T{1} : T{0}));
                             }
                           });
}

// ---------------------------------------------------------------------------
// Layers

/// X W + b with b broadcast over rows. A rank-1 X is treated as one row and the
/// result is rank-1 again.
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_same_graph(x, w);
  detail::require_same_graph(x, b);
  const bool vec = x.value().rank() == 1;
  Var<T> xm = vec ? reshape(x, {1, x.value().size()}) : x;
  detail::require_matrix("affine", xm);
  detail::require_matrix("affine", w);
  const Tensor<T>& xv = xm.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rank() != 1 || bv.size() != wv.cols()) {
    throw DimensionError("affine: input " + shape_str(xv.shape()) + ", weight " +
                         shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()) +
                         " are incompatible");
  }
  const std::size_t m = xv.rows(), p = xv.cols(), q = wv.cols();
  Tensor<T> out({m, q});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(bv.raw(), q, out.raw() + i * q);
  kernels::matmul_acc(xv.raw(), wv.raw(), out.raw(), m, p, q);
  std::size_t xid = xm.id(), wid = w.id(), bid = b.id();
  Var<T> y = x.graph().op(std::move(out), {xid, wid, bid},
                          [xid, wid, bid, m, p, q](Graph<T>& g, std::size_t self) {
                            const Tensor<T>& gout = g.node(self).grad;
                            if (g.needs_grad(xid)) {
                              Tensor<T> wt = transposed(g.node(wid).value);
                              kernels::matmul_acc(gout.raw(), wt.raw(), g.grad(xid).raw(), m, q, p);
                            }
                            if (g.needs_grad(wid)) {
                              kernels::matmul_tn_acc(g.node(xid).value.raw(), gout.raw(),
                                                     g.grad(wid).raw(), m, p, q);
                            }
                            if (g.needs_grad(bid)) {
                              Tensor<T>& gb = g.grad(bid);
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < q; ++j) gb[j] += gout[i * q + j];
                            }
                          });
  return vec ? reshape(y, {q}) : y;
}


/// W^T X + b with b broadcast over columns: the affine map applied to every
/// column of X [p x n], for W [p x q] and b [q].
template <class T>
Var<T> column_affine(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_same_graph(x, w);
  detail::require_same_graph(x, b);
  detail::require_matrix("column_affine", x);
  detail::require_matrix("column_affine", w);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  if (xv.rows() != wv.rows() || bv.rank() != 1 || bv.size() != wv.cols()) {
    throw DimensionError("column_affine: input " + shape_str(xv.shape()) + ", weight " +
                         shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()) +
                         " are incompatible");
  }
  const std::size_t p = xv.rows(), n = xv.cols(), q = wv.cols();
  Tensor<T> out({q, n});
  for (std::size_t j = 0; j < q; ++j) std::fill_n(out.raw() + j * n, n, bv[j]);
  kernels::matmul_tn_acc(wv.raw(), xv.raw(), out.raw(), p, q, n);
  std::size_t xid = x.id(), wid = w.id(), bid = b.id();
  return x.graph().op(std::move(out), {xid, wid, bid},
                      [xid, wid, bid, p, n, q](Graph<T>& g, std::size_t self) {
                        const Tensor<T>& gout = g.node(self).grad;
                        if (g.needs_grad(xid)) {
                          kernels::matmul_acc(g.node(wid).value.raw(), gout.raw(), g.grad(xid).raw(), p, q, n);
                        }
                        if (g.needs_grad(wid)) {
                          Tensor<T> gt = transposed(gout);
                          kernels::matmul_acc(g.node(xid).value.raw(), gt.raw(), g.grad(wid).raw(), p, n, q);
                        }
                        if (g.needs_grad(bid)) {
                          Tensor<T>& gb = g.grad(bid);
                          for (std::size_t j = 0; j < q; ++j)
                            for (std::size_t i = 0; i < n; ++i) gb[j] += gout[j * n + i];
                        }
                      });
}

}  // namespace neuron
