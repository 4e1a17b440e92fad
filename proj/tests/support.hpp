// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "neuron/neuron.hpp"

namespace testing {

template <class T = double>
neuron::Tensor<T> random_tensor(neuron::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  neuron::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// Fresh empty directory under the system temp folder, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("neuron_" + tag + "_" + std::to_string(rng() % 1000000007ull));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A small model that keeps double-precision gradient checks quick.
inline neuron::ModelConfig tiny_model(std::size_t d = 4) {
  neuron::ModelConfig m;
  m.encoder.T = 6;
  m.encoder.T_hat = 3;
  m.encoder.V = 2;
  m.encoder.M = 1;
  m.encoder.C = 3;
  m.encoder.hidden = 3;
  m.N_s = 3;
  m.N_t = 3;
  m.d = d;
  m.mlp_hidden = 3;
  m.head_hidden = 3;
  return m;
}

inline neuron::SkeletonSequence random_sequence(const neuron::EncoderConfig& cfg, int label,
                                                std::mt19937_64& rng) {
  neuron::SkeletonSequence s;
  s.label = label;
  s.coords = random_tensor<float>({3, cfg.T, cfg.V, cfg.M}, rng);
  return s;
}

}  // namespace testing
