// SPDX-License-Identifier: Apache-2.0
#pragma once

// SGD training with step learning-rate decay and decoupled weight decay, plus
// checkpoint files.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "neuron/model.hpp"
#include "neuron/protocol.hpp"

namespace neuron {

struct TrainConfig {
  double lr = 0.1;
  std::vector<std::size_t> milestones{10, 20};
  double lr_decay = 0.1;
  double weight_decay = 0.0005;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double clip_norm = 5.0;  // global gradient L2 norm cap; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (epochs == 0) throw ConfigError("epoch count must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be nonnegative");
  }
};

inline io::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},         {"milestones", c.milestones}, {"lr_decay", c.lr_decay},
          {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"clip_norm", c.clip_norm}, {"seed", c.seed}};
}

inline void merge_json(TrainConfig& c, const io::json& j) {
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("lr", c.lr);
  get("milestones", c.milestones);
  get("lr_decay", c.lr_decay);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("clip_norm", c.clip_norm);
  get("seed", c.seed);
}

/// Base rate times lr_decay for every milestone already reached (epochs are
/// zero-based, so milestone 10 applies from the eleventh epoch on).
inline double learning_rate_at(const TrainConfig& c, std::size_t epoch) {
  double lr = c.lr;
  for (std::size_t m : c.milestones)
    if (epoch >= m) lr *= c.lr_decay;
  return lr;
}

/// theta <- (1 - lr*wd) * theta - lr * grad
template <class T>
void sgd_step(Parameters<T>& params, const std::map<std::string, Tensor<T>>& grads, double lr,
              double weight_decay) {
  const T shrink = static_cast<T>(1.0 - lr * weight_decay);
  const T step = static_cast<T>(lr);
  for (auto& [name, value] : params) {
    const Tensor<T>& g = grads.at(name);
    if (lr == 0.0) continue;
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = shrink * value[i] - step * g[i];
  }
}

/// Rescales all gradients together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
template <class T>
double clip_gradients(std::map<std::string, Tensor<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (T v : g.data()) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& [_, g] : grads)
      for (T& v : g.data()) v *= f;
  }
  return norm;
}

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<int> seen;
  std::uint64_t init_seed = 0;
  Parameters<float> params;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.params == b.params && a.seen == b.seen && to_json(a.model) == to_json(b.model) &&
           to_json(a.train) == to_json(b.train) && a.init_seed == b.init_seed;
  }
};

inline void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ck) {
  io::json doc;
  doc["format"] = "neuron.checkpoint";
  doc["model"] = to_json(ck.model);
  doc["train"] = to_json(ck.train);
  doc["seen"] = ck.seen;
  doc["init_seed"] = ck.init_seed;
  io::json params = io::json::array();
  std::vector<float> payload;
  payload.reserve(ck.params.element_count());
  for (const auto& [name, t] : ck.params) {
    params.push_back({{"name", name}, {"shape", t.shape()}});
    payload.insert(payload.end(), t.data().begin(), t.data().end());
  }
  doc["params"] = params;
  doc["payload"] = io::payload_path_for(manifest).filename().string();
  io::write_json(manifest, doc);
  io::write_f32(io::payload_path_for(manifest), payload);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  const io::json doc = io::read_json(manifest);
  Checkpoint ck;
  try {
    merge_json(ck.model, doc.at("model"));
    merge_json(ck.train, doc.at("train"));
    ck.seen = doc.at("seen").get<std::vector<int>>();
    ck.init_seed = doc.value("init_seed", std::uint64_t{0});
  } catch (const io::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  const auto payload_file = io::resolve_payload(manifest, doc);
  const std::vector<float> payload = io::read_f32(payload_file);
  std::size_t offset = 0;
  for (const auto& entry : doc.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_numel(shape);
    if (offset + n > payload.size()) {
      throw FormatError(payload_file.string() + ": parameter '" + name + "' needs bytes [" +
                        std::to_string(offset * 4) + ", " + std::to_string((offset + n) * 4) +
                        ") but payload ends at byte " + std::to_string(payload.size() * 4));
    }
    ck.params.add(name, Tensor<float>(shape, std::vector<float>(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                                                                payload.begin() + static_cast<std::ptrdiff_t>(offset + n))));
    offset += n;
  }
  io::expect_count(payload_file, payload.size(), offset);
  return ck;
}

/// Mean of per-sample total losses over a batch, with gradients.
template <class T, class Sample>
std::pair<double, std::map<std::string, Tensor<T>>> batch_gradient(
    const Parameters<T>& params, const ModelConfig& cfg, const std::vector<const Sample*>& batch,
    const SemanticBank& bank, const std::vector<int>& seen) {
  Graph<T> g;
  Bound<T> p(g, params);
  ClassEmbeddings<T> targets(p, bank, seen);
  std::vector<Var<T>> losses;
  losses.reserve(batch.size());
  for (const Sample* s : batch) {
    SampleOutputs<T> out = forward(p, cfg, *s);
    losses.push_back(total_loss(p, out.pooled, targets, label_of(*s), cfg.shared_heads, cfg.temperature));
  }
  Var<T> loss = scale(add_n(losses), static_cast<T>(1.0 / static_cast<double>(batch.size())));
  const double value = loss.value()[0];
  return {value, g.backward(loss)};
}

/// Mean total loss over a dataset, evaluated in chunks without gradients.
template <class T, class Sample>
double mean_loss(const Parameters<T>& params, const ModelConfig& cfg, const std::vector<Sample>& data,
                 const SemanticBank& bank, const std::vector<int>& seen, std::size_t chunk = 64) {
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    Graph<T> g;
    Bound<T> p(g, params);
    ClassEmbeddings<T> targets(p, bank, seen);
    const std::size_t end = std::min(data.size(), begin + chunk);
    for (std::size_t i = begin; i < end; ++i) {
      SampleOutputs<T> out = forward(p, cfg, data[i]);
      total += total_loss(p, out.pooled, targets, label_of(data[i]), cfg.shared_heads, cfg.temperature)
                   .value()[0];
    }
  }
  return total / static_cast<double>(data.size());
}

struct TrainLog {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // running mean of minibatch losses
  std::vector<double> epoch_lr;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

/// Adapts a model config to the bank it will be trained against: d and the
/// phase count follow the bank; a schedule of the wrong length is respaced
/// evenly between its first and last alpha.
inline ModelConfig fit_to_bank(ModelConfig cfg, const SemanticBank& bank) {
  cfg.d = bank.dim();
  if (cfg.phases != bank.phases()) {
    cfg.phases = bank.phases();
    const auto& a = cfg.schedule.alphas;
    const double lo = a.empty() ? 0.3 : a.front(), hi = a.empty() ? 0.7 : a.back();
    std::vector<double> alphas(cfg.phases);
    for (std::size_t e = 0; e < cfg.phases; ++e) {
      alphas[e] = cfg.phases == 1 ? hi
                                  : lo + (hi - lo) * static_cast<double>(e) / static_cast<double>(cfg.phases - 1);
    }
    cfg.schedule.alphas = alphas;
  }
  return cfg;
}

using EpochCallback = std::function<void(std::size_t epoch, double lr, double loss)>;

/// Shuffled minibatch SGD in 32-bit precision. Deterministic given
/// (model config, init_seed, train config seed).
template <class Sample>
TrainResult train(const std::vector<Sample>& data, const SemanticBank& bank,
                  const SplitProtocol& protocol, ModelConfig model, const TrainConfig& config,
                  std::uint64_t init_seed, const EpochCallback& on_epoch = {}) {
  config.validate();
  protocol.validate();
  if (data.empty()) throw InputError("training set is empty");
  for (const Sample& s : data) {
    if (!protocol.is_seen(label_of(s))) {
      throw ProtocolError("training label " + std::to_string(label_of(s)) +
                          " is not a seen class of the protocol");
    }
  }
  for (int y : protocol.seen) {
    if (!bank.has_class(y)) throw LookupError("seen class " + std::to_string(y) + " missing from semantic bank");
  }
  model = fit_to_bank(model, bank);
  model.validate();

  TrainResult result;
  Parameters<float> params = init_parameters<float>(model, init_seed);
  result.log.initial_loss = mean_loss(params, model, data, bank, protocol.seen);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen_samples = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const Sample*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data[order[i]]);
      auto [loss, grads] = batch_gradient(params, model, batch, bank, protocol.seen);
      if (config.clip_norm > 0.0) clip_gradients(grads, config.clip_norm);
      sgd_step(params, grads, lr, config.weight_decay);
      loss_sum += loss * static_cast<double>(batch.size());
      seen_samples += batch.size();
    }
    const double epoch_loss = loss_sum / static_cast<double>(seen_samples);
    result.log.epoch_loss.push_back(epoch_loss);
    result.log.epoch_lr.push_back(lr);
    if (on_epoch) on_epoch(epoch, lr, epoch_loss);
  }

  result.checkpoint.model = model;
  result.checkpoint.train = config;
  result.checkpoint.seen = protocol.seen;
  result.checkpoint.init_seed = init_seed;
  result.checkpoint.params = std::move(params);
  return result;
}

}  // namespace neuron
