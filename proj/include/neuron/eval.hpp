// SPDX-License-Identifier: Apache-2.0
#pragma once

// Calibrated-stacking prediction and the Acc / S / U / H metrics.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "neuron/train.hpp"

namespace neuron {

/// Constant subtracted from seen-class scores, per stream, in GZSL.
struct CalibrationConfig {
  double gamma_s = 0.0003;
  double gamma_t = 0.0002;
};

inline io::json to_json(const CalibrationConfig& c) {
  return {{"gamma_s", c.gamma_s}, {"gamma_t", c.gamma_t}};
}

using ClassScores = std::map<int, double>;

/// phi(X)^T psi(Z_hat_y) for each candidate, using the final-phase head and
/// final-phase class embeddings.
template <class T>
ClassScores class_scores(const Bound<T>& p, const ModelConfig& cfg, Var<T> X,
                         const ClassEmbeddings<T>& candidates, Stream s) {
  const std::size_t last = cfg.phases - 1;
  Var<T> logits = phase_logits(p, head_name(s, last, cfg.shared_heads), X, candidates.at(s, last), 1.0);
  ClassScores out;
  for (std::size_t i = 0; i < candidates.classes().size(); ++i) {
    out.emplace(candidates.classes()[i], static_cast<double>(logits.value()[i]));
  }
  return out;
}

/// Per-stream predictions; the prediction set holds one or two classes.
struct Prediction {
  int spatial = -1;
  int temporal = -1;

  std::vector<int> set() const {
    if (spatial == temporal) return {spatial};
    return {std::min(spatial, temporal), std::max(spatial, temporal)};
  }
  bool contains(int y) const { return y == spatial || y == temporal; }
};

namespace detail {

inline int calibrated_argmax(const ClassScores& scores, const SplitProtocol& protocol, double gamma) {
  const std::vector<int> candidates = protocol.candidates();
  if (candidates.empty()) throw ContractError("no candidate classes to predict from");
  int best = 0;
  double best_score = 0.0;
  bool first = true;
  for (int y : candidates) {  // ascending, so strict '>' keeps the lower id on ties
    auto it = scores.find(y);
    if (it == scores.end()) throw ContractError("no score for candidate class " + std::to_string(y));
    double v = it->second;
    if (protocol.mode == EvalMode::gzsl && protocol.is_seen(y)) v -= gamma;
    if (first || v > best_score) {
      best = y;
      best_score = v;
      first = false;
    }
  }
  return best;
}

}  // namespace detail

inline Prediction calibrated_predict(const ClassScores& spatial, const ClassScores& temporal,
                                     const SplitProtocol& protocol, const CalibrationConfig& calib) {
  return {detail::calibrated_argmax(spatial, protocol, calib.gamma_s),
          detail::calibrated_argmax(temporal, protocol, calib.gamma_t)};
}

/// Single-label variant: argmax of the summed calibrated stream scores.
inline int strict_predict(const ClassScores& spatial, const ClassScores& temporal,
                          const SplitProtocol& protocol, const CalibrationConfig& calib) {
  ClassScores fused;
  for (int y : protocol.candidates()) {
    auto s = spatial.find(y), t = temporal.find(y);
    if (s == spatial.end() || t == temporal.end()) {
      throw ContractError("no score for candidate class " + std::to_string(y));
    }
    double v = s->second + t->second;
    if (protocol.mode == EvalMode::gzsl && protocol.is_seen(y)) v -= calib.gamma_s + calib.gamma_t;
    fused.emplace(y, v);
  }
  SplitProtocol plain = protocol;
  plain.mode = EvalMode::zsl;  // calibration already applied above
  plain.unseen = protocol.candidates();
  plain.seen.clear();
  return detail::calibrated_argmax(fused, plain, 0.0);
}

/// Fraction of samples whose prediction set contains the label.
inline double top1_accuracy(const std::vector<Prediction>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("top1_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i].contains(labels[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double harmonic_mean(double seen, double unseen) {
  if (seen + unseen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

struct EvalReport {
  EvalMode mode = EvalMode::gzsl;
  std::optional<double> acc;
  std::optional<double> seen;
  std::optional<double> unseen;
  std::optional<double> harmonic;
  std::size_t n_samples = 0;
  std::size_t n_seen = 0;
  std::size_t n_unseen = 0;
  std::size_t seen_predictions_s = 0;  // samples whose spatial prediction is a seen class
  std::size_t seen_predictions_t = 0;
  bool strict = false;
  SplitProtocol protocol;
  CalibrationConfig calib;
};

inline io::json to_json(const EvalReport& r) {
  io::json j;
  j["mode"] = mode_name(r.mode);
  if (r.acc) j["acc"] = *r.acc;
  if (r.seen) j["seen"] = *r.seen;
  if (r.unseen) j["unseen"] = *r.unseen;
  if (r.harmonic) j["harmonic"] = *r.harmonic;
  j["n_samples"] = r.n_samples;
  j["n_seen"] = r.n_seen;
  j["n_unseen"] = r.n_unseen;
  j["seen_predictions"] = {{"spatial", r.seen_predictions_s}, {"temporal", r.seen_predictions_t}};
  j["strict"] = r.strict;
  j["protocol"] = to_json(r.protocol);
  j["calib"] = to_json(r.calib);
  return j;
}

/// Raw final-phase scores for one sample, both streams.
struct SampleScores {
  int label = 0;
  ClassScores spatial;
  ClassScores temporal;
};

/// Forward passes over `data`, scoring every class in the protocol. Separate
/// from prediction so calibration sweeps can reuse the scores.
template <class Sample>
std::vector<SampleScores> score_dataset(const Checkpoint& ck, const std::vector<Sample>& data,
                                        const SemanticBank& bank, const SplitProtocol& protocol,
                                        std::size_t chunk = 64) {
  std::vector<int> classes = protocol.seen;
  classes.insert(classes.end(), protocol.unseen.begin(), protocol.unseen.end());
  std::sort(classes.begin(), classes.end());
  for (int y : classes) {
    if (!bank.has_class(y)) throw LookupError("class " + std::to_string(y) + " missing from semantic bank");
  }
  std::vector<SampleScores> out;
  out.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    Graph<float> g;
    Bound<float> p(g, ck.params);
    ClassEmbeddings<float> table(p, bank, classes);
    const std::size_t end = std::min(data.size(), begin + chunk);
    for (std::size_t i = begin; i < end; ++i) {
      SampleOutputs<float> o = forward(p, ck.model, data[i]);
      out.push_back({label_of(data[i]), class_scores(p, ck.model, o.pooled.spatial.back(), table, Stream::spatial),
                     class_scores(p, ck.model, o.pooled.temporal.back(), table, Stream::temporal)});
    }
  }
  return out;
}

/// Metrics from precomputed scores. ZSL: Acc over unseen-class samples.
/// GZSL: S over seen-class samples, U over unseen-class samples, and H.
inline EvalReport evaluate_scores(const std::vector<SampleScores>& scores, const SplitProtocol& protocol,
                                  const CalibrationConfig& calib, bool strict = false) {
  protocol.validate();
  EvalReport r;
  r.mode = protocol.mode;
  r.protocol = protocol;
  r.calib = calib;
  r.strict = strict;
  std::vector<Prediction> seen_pred, unseen_pred;
  std::vector<int> seen_lab, unseen_lab;
  for (const SampleScores& s : scores) {
    if (!protocol.contains(s.label)) {
      throw ProtocolError("sample label " + std::to_string(s.label) + " is outside the protocol");
    }
    const bool is_seen = protocol.is_seen(s.label);
    if (protocol.mode == EvalMode::zsl && is_seen) continue;
    Prediction pred;
    if (strict) {
      const int y = strict_predict(s.spatial, s.temporal, protocol, calib);
      pred = {y, y};
    } else {
      pred = calibrated_predict(s.spatial, s.temporal, protocol, calib);
    }
    r.seen_predictions_s += protocol.is_seen(pred.spatial) ? 1 : 0;
    r.seen_predictions_t += protocol.is_seen(pred.temporal) ? 1 : 0;
    (is_seen ? seen_pred : unseen_pred).push_back(pred);
    (is_seen ? seen_lab : unseen_lab).push_back(s.label);
  }
  r.n_seen = seen_lab.size();
  r.n_unseen = unseen_lab.size();
  r.n_samples = r.n_seen + r.n_unseen;
  if (protocol.mode == EvalMode::zsl) {
    r.acc = top1_accuracy(unseen_pred, unseen_lab);
  } else {
    r.seen = top1_accuracy(seen_pred, seen_lab);
    r.unseen = top1_accuracy(unseen_pred, unseen_lab);
    r.harmonic = harmonic_mean(*r.seen, *r.unseen);
  }
  return r;
}

template <class Sample>
EvalReport evaluate(const Checkpoint& ck, const std::vector<Sample>& data, const SemanticBank& bank,
                    const SplitProtocol& protocol, const CalibrationConfig& calib, bool strict = false) {
  protocol.validate();
  for (const Sample& s : data) {
    if (!protocol.contains(label_of(s))) {
      throw ProtocolError("sample label " + std::to_string(label_of(s)) + " is outside the protocol");
    }
  }
  return evaluate_scores(score_dataset(ck, data, bank, protocol), protocol, calib, strict);
}

}  // namespace neuron
