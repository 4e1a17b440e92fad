// SPDX-License-Identifier: Apache-2.0
#pragma once

// Phase-wise skeleton/semantic alignment: every phase's pooled prototype is
// projected next to the projected class embeddings of the seen classes and
// scored with a softmax cross-entropy over those classes.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "neuron/nn.hpp"
#include "neuron/semantics.hpp"

namespace neuron {

/// Mean over the attribute axis of a [C x N] prototype.
template <class T>
Var<T> pool_prototype(Var<T> P) {
  return mean_pool(P, 1);
}

/// Projected class embeddings psi(Z_hat_k) for a fixed candidate list, one
/// [K x d] node per (stream, phase). Built once per graph and shared by all
/// samples in it.
template <class T>
class ClassEmbeddings {
 public:
  ClassEmbeddings(const Bound<T>& p, const SemanticBank& bank, std::vector<int> classes,
                  const std::string& psi_prefix = "psi")
      : classes_(std::move(classes)), phases_(bank.phases()) {
    if (classes_.empty()) throw ContractError("candidate class list is empty");
    for (std::size_t i = 0; i < classes_.size(); ++i) row_.emplace(classes_[i], i);
    Graph<T>& g = p.graph();
    for (Stream s : {Stream::spatial, Stream::temporal}) {
      for (std::size_t e = 0; e < phases_; ++e) {
        Var<T> z = g.constant(bank.pooled_matrix<T>(classes_, s, e));
        table_.push_back(mlp(p, psi_prefix, z));
      }
    }
  }

  Var<T> at(Stream s, std::size_t phase) const {
    if (phase >= phases_) throw LookupError("phase " + std::to_string(phase) + " outside bank");
    return table_[static_cast<std::size_t>(s) * phases_ + phase];
  }

  std::size_t index_of(int y) const {
    auto it = row_.find(y);
    if (it == row_.end()) throw ContractError("class " + std::to_string(y) + " is not a candidate");
    return it->second;
  }

  const std::vector<int>& classes() const noexcept { return classes_; }
  std::size_t phases() const noexcept { return phases_; }

 private:
  std::vector<int> classes_;
  std::size_t phases_;
  std::map<int, std::size_t> row_;
  std::vector<Var<T>> table_;
};

/// phi(X)^T psi(Z_hat_k) / temperature for every candidate k, as a [K] vector.
template <class T>
Var<T> phase_logits(const Bound<T>& p, const std::string& head_prefix, Var<T> X,
                    Var<T> class_table, double temperature = 1.0) {
  Var<T> phi = mlp(p, head_prefix, X);
  const std::size_t d = phi.value().size();
  Var<T> logits = matmul(class_table, reshape(phi, {d, 1}));
  logits = reshape(logits, {class_table.value().rows()});
  if (temperature != 1.0) logits = scale(logits, static_cast<T>(1.0 / temperature));
  return logits;
}

/// -log softmax over the seen classes at the true class y.
template <class T>
Var<T> phase_loss(const Bound<T>& p, const std::string& head_prefix, Var<T> X,
                  const ClassEmbeddings<T>& targets, int y, Stream s, std::size_t phase,
                  double temperature = 1.0) {
  const std::size_t target = targets.index_of(y);
  return cross_entropy(phase_logits(p, head_prefix, X, targets.at(s, phase), temperature), target);
}

/// Stand-alone form that builds the class table itself.
template <class T>
Var<T> phase_loss(const Bound<T>& p, const std::string& head_prefix, Var<T> X,
                  const std::string& psi_prefix, const SemanticBank& bank, int y, std::size_t phase,
                  Stream s, const std::vector<int>& seen_classes, double temperature = 1.0) {
  if (std::find(seen_classes.begin(), seen_classes.end(), y) == seen_classes.end()) {
    throw ContractError("class " + std::to_string(y) + " is not a seen class");
  }
  ClassEmbeddings<T> targets(p, bank, seen_classes, psi_prefix);
  return phase_loss(p, head_prefix, X, targets, y, s, phase, temperature);
}

enum class StreamSelection { both, spatial_only, temporal_only };

/// Pooled per-phase representations of one sample.
template <class T>
struct PhaseFeatures {
  std::vector<Var<T>> spatial;   // X_s^e, e = 1..N_e
  std::vector<Var<T>> temporal;  // X_t^e
};

inline std::string head_name(Stream s, std::size_t phase, bool shared) {
  std::string base = std::string("head.") + stream_tag(s);
  return shared ? base : base + std::to_string(phase);
}

/// Sum over phases of the spatial and temporal alignment losses.
template <class T>
Var<T> total_loss(const Bound<T>& p, const PhaseFeatures<T>& x, const ClassEmbeddings<T>& targets,
                  int y, bool shared_heads = false, double temperature = 1.0,
                  StreamSelection streams = StreamSelection::both) {
  const std::size_t phases = targets.phases();
  if (x.spatial.size() != phases || x.temporal.size() != phases) {
    throw ContractError("total_loss needs outputs for all " + std::to_string(phases) + " phases");
  }
  std::vector<Var<T>> terms;
  for (std::size_t e = 0; e < phases; ++e) {
    if (streams != StreamSelection::temporal_only) {
      terms.push_back(phase_loss(p, head_name(Stream::spatial, e, shared_heads), x.spatial[e],
                                 targets, y, Stream::spatial, e, temperature));
    }
    if (streams != StreamSelection::spatial_only) {
      terms.push_back(phase_loss(p, head_name(Stream::temporal, e, shared_heads), x.temporal[e],
                                 targets, y, Stream::temporal, e, temperature));
    }
  }
  return add_n(terms);
}

}  // namespace neuron
