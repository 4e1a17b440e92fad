// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-class, per-phase semantic feature banks.
//
// Storage order is (class, stream, phase, description, dim) with the spatial
// stream before the temporal one, which is also the payload order on disk.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "neuron/io.hpp"
#include "neuron/tensor.hpp"

namespace neuron {

enum class Stream { spatial = 0, temporal = 1 };

inline const char* stream_tag(Stream s) { return s == Stream::spatial ? "s" : "t"; }

class SemanticBank {
 public:
  using CellKey = std::tuple<int, Stream, std::size_t>;  // (class, stream, phase)

  SemanticBank() = default;

  /// Builds a bank from individual cells; every (class, stream, phase) must be
  /// present and every cell must be [N_a x d].
  static SemanticBank from_cells(std::vector<int> classes, std::size_t phases,
                                 const std::map<CellKey, Tensor<float>>& cells) {
    if (classes.empty() || phases == 0) throw ContractError("bank needs classes and phases");
    SemanticBank b;
    b.classes_ = std::move(classes);
    b.phases_ = phases;
    b.set_default_labels();
    b.index_classes();
    bool first = true;
    for (int y : b.classes_) {
      for (Stream s : {Stream::spatial, Stream::temporal}) {
        for (std::size_t e = 0; e < phases; ++e) {
          auto it = cells.find({y, s, e});
          if (it == cells.end()) {
            throw CompletenessError("semantic bank is missing cell (" + std::to_string(y) + ", " +
                                    stream_tag(s) + ", " + std::to_string(e) + ")");
          }
          const Tensor<float>& cell = it->second;
          if (cell.rank() != 2) throw FormatError("semantic cell must be [N_a x d]");
          if (first) {
            b.descriptions_ = cell.rows();
            b.dim_ = cell.cols();
            first = false;
          } else if (cell.rows() != b.descriptions_ || cell.cols() != b.dim_) {
            throw FormatError("semantic cell (" + std::to_string(y) + ", " + stream_tag(s) + ", " +
                              std::to_string(e) + ") has shape " + shape_str(cell.shape()) +
                              ", expected [" + std::to_string(b.descriptions_) + "x" +
                              std::to_string(b.dim_) + "]");
          }
          b.data_.insert(b.data_.end(), cell.data().begin(), cell.data().end());
        }
      }
    }
    return b;
  }

  const std::vector<int>& classes() const noexcept { return classes_; }
  std::size_t phases() const noexcept { return phases_; }
  std::size_t descriptions() const noexcept { return descriptions_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& phase_labels(Stream s) const {
    return s == Stream::spatial ? spatial_labels_ : temporal_labels_;
  }
  const std::vector<float>& raw() const noexcept { return data_; }

  bool has_class(int y) const { return class_pos_.count(y) != 0; }

  /// Z_y for one stream and phase, [N_a x d].
  Tensor<float> cell(int y, Stream s, std::size_t phase) const {
    const std::size_t off = offset(y, s, phase);
    const std::size_t n = descriptions_ * dim_;
    return Tensor<float>({descriptions_, dim_},
                         std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(off),
                                            data_.begin() + static_cast<std::ptrdiff_t>(off + n)));
  }

  /// Mean over the description axis: the pooled class embedding.
  template <class T = double>
  Tensor<T> pool_class(int y, Stream s, std::size_t phase) const {
    const std::size_t off = offset(y, s, phase);
    std::vector<double> acc(dim_, 0.0);
    for (std::size_t a = 0; a < descriptions_; ++a)
      for (std::size_t k = 0; k < dim_; ++k) acc[k] += data_[off + a * dim_ + k];
    Tensor<T> out({dim_});
    for (std::size_t k = 0; k < dim_; ++k) out[k] = static_cast<T>(acc[k] / static_cast<double>(descriptions_));
    return out;
  }

  /// Pooled embeddings of `ys` stacked as rows, [|ys| x d].
  template <class T = double>
  Tensor<T> pooled_matrix(const std::vector<int>& ys, Stream s, std::size_t phase) const {
    Tensor<T> out({ys.size(), dim_});
    for (std::size_t i = 0; i < ys.size(); ++i) {
      Tensor<T> row = pool_class<T>(ys[i], s, phase);
      std::copy(row.data().begin(), row.data().end(), out.raw() + i * dim_);
    }
    return out;
  }

  void set_phase_labels(std::vector<std::string> spatial, std::vector<std::string> temporal) {
    if (spatial.size() != phases_ || temporal.size() != phases_) {
      throw FormatError("phase label count does not match N_e=" + std::to_string(phases_));
    }
    spatial_labels_ = std::move(spatial);
    temporal_labels_ = std::move(temporal);
  }

  friend bool operator==(const SemanticBank& a, const SemanticBank& b) {
    return a.classes_ == b.classes_ && a.phases_ == b.phases_ &&
           a.descriptions_ == b.descriptions_ && a.dim_ == b.dim_ && a.data_ == b.data_ &&
           a.spatial_labels_ == b.spatial_labels_ && a.temporal_labels_ == b.temporal_labels_;
  }

  // Raw construction used by the loader once sizes have been checked.
  static SemanticBank from_payload(std::vector<int> classes, std::size_t phases,
                                   std::size_t descriptions, std::size_t dim,
                                   std::vector<float> data) {
    SemanticBank b;
    b.classes_ = std::move(classes);
    b.phases_ = phases;
    b.descriptions_ = descriptions;
    b.dim_ = dim;
    b.data_ = std::move(data);
    b.set_default_labels();
    b.index_classes();
    return b;
  }

 private:
  std::size_t offset(int y, Stream s, std::size_t phase) const {
    auto it = class_pos_.find(y);
    if (it == class_pos_.end()) throw LookupError("class " + std::to_string(y) + " not in semantic bank");
    if (phase >= phases_) {
      throw LookupError("phase " + std::to_string(phase) + " outside bank with N_e=" +
                        std::to_string(phases_));
    }
    const std::size_t cell_size = descriptions_ * dim_;
    const std::size_t cell_index =
        (it->second * 2 + static_cast<std::size_t>(s)) * phases_ + phase;
    return cell_index * cell_size;
  }

  void index_classes() {
    class_pos_.clear();
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (!class_pos_.emplace(classes_[i], i).second) {
        throw FormatError("class " + std::to_string(classes_[i]) + " listed twice in semantic bank");
      }
    }
  }

  void set_default_labels() {
    spatial_labels_.clear();
    temporal_labels_.clear();
    if (phases_ == 3) {
      spatial_labels_ = {"coarse", "mid", "fine"};
      temporal_labels_ = {"start", "mid", "end"};
      return;
    }
    for (std::size_t e = 0; e < phases_; ++e) {
      spatial_labels_.push_back("phase" + std::to_string(e));
      temporal_labels_.push_back("phase" + std::to_string(e));
    }
  }

  std::vector<int> classes_;
  std::size_t phases_ = 0;
  std::size_t descriptions_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<std::string> spatial_labels_;
  std::vector<std::string> temporal_labels_;
  std::map<int, std::size_t> class_pos_;
};

inline void save_bank(const std::filesystem::path& manifest, const SemanticBank& bank) {
  io::json doc;
  doc["format"] = "neuron.semantic_bank";
  doc["classes"] = bank.classes();
  doc["N_e"] = bank.phases();
  doc["N_a"] = bank.descriptions();
  doc["d"] = bank.dim();
  doc["phase_labels"] = {{"spatial", bank.phase_labels(Stream::spatial)},
                         {"temporal", bank.phase_labels(Stream::temporal)}};
  doc["payload"] = io::payload_path_for(manifest).filename().string();
  io::write_json(manifest, doc);
  io::write_f32(io::payload_path_for(manifest), bank.raw());
}

/// Loads and validates a bank. Non-default phase counts are accepted; a note
/// is appended to `warnings` (or printed to stderr when none is given).
inline SemanticBank load_bank(const std::filesystem::path& manifest,
                              std::vector<std::string>* warnings = nullptr) {
  const io::json doc = io::read_json(manifest);
  auto classes = io::field<std::vector<int>>(doc, "classes", manifest);
  const auto phases = io::field<std::size_t>(doc, "N_e", manifest);
  const auto na = io::field<std::size_t>(doc, "N_a", manifest);
  const auto d = io::field<std::size_t>(doc, "d", manifest);
  if (classes.empty() || phases == 0 || na == 0 || d == 0) {
    throw FormatError(manifest.string() + ": empty class list or zero dimension");
  }
  const auto payload_file = io::resolve_payload(manifest, doc);
  std::vector<float> payload = io::read_f32(payload_file);

  const std::size_t cell = na * d;
  const std::size_t cells_per_class = 2 * phases;
  const std::size_t want = classes.size() * cells_per_class * cell;
  if (payload.size() < want && payload.size() % cell == 0) {
    // Whole cells are missing: name the first one absent.
    const std::size_t idx = payload.size() / cell;
    const int y = classes[idx / cells_per_class];
    const std::size_t within = idx % cells_per_class;
    const Stream s = within < phases ? Stream::spatial : Stream::temporal;
    throw CompletenessError(manifest.string() + ": semantic bank is missing cell (" +
                            std::to_string(y) + ", " + stream_tag(s) + ", " +
                            std::to_string(within % phases) + ")");
  }
  if (payload.size() != want) {
    throw FormatError(manifest.string() + ": payload holds " + std::to_string(payload.size()) +
                      " values, not a whole number of [N_a x d] = [" + std::to_string(na) + "x" +
                      std::to_string(d) + "] cells for the declared layout (expected " +
                      std::to_string(want) + "); embedding dimension mismatch?");
  }
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!std::isfinite(payload[i])) {
      throw FormatError(manifest.string() + ": non-finite value at byte offset " + std::to_string(4 * i));
    }
  }
  SemanticBank bank = SemanticBank::from_payload(std::move(classes), phases, na, d, std::move(payload));
  if (doc.contains("phase_labels") && doc["phase_labels"].is_object()) {
    try {
      bank.set_phase_labels(doc["phase_labels"].at("spatial").get<std::vector<std::string>>(),
                            doc["phase_labels"].at("temporal").get<std::vector<std::string>>());
    } catch (const io::json::exception& e) {
      throw FormatError(manifest.string() + ": bad phase_labels: " + e.what());
    }
  }
  if (phases != 3) {
    const std::string msg = manifest.string() + ": bank has N_e=" + std::to_string(phases) +
                            " (default is 3); the pipeline will run " + std::to_string(phases) +
                            " phases";
    if (warnings) warnings->push_back(msg);
    else std::cerr << "warning: " << msg << '\n';
  }
  return bank;
}

/// Seeded Gram-Schmidt on Gaussian vectors. When count > dim the surplus
/// vectors are only normalised.
inline std::vector<std::vector<double>> orthonormal_directions(std::size_t count, std::size_t dim,
                                                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    if (i < dim) {
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& u : out) {
          double dot = 0;
          for (std::size_t k = 0; k < dim; ++k) dot += v[k] * u[k];
          for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
        }
      }
    }
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    out.push_back(std::move(v));
  }
  return out;
}

struct BankNoise {
  double phase_scale = 0.4;   // perturbation norm at phase 0; halves each phase
  double description_std = 0.02;
};

/// Per-phase perturbation norm: strictly decreasing in the phase index.
inline double phase_perturbation(const BankNoise& noise, std::size_t phase) {
  return noise.phase_scale / static_cast<double>(1u << phase);
}

/// Expands one base direction per class into a full bank: each phase adds a
/// random perturbation of norm phase_perturbation(e) (independently per
/// stream), then N_a noisy copies are drawn around it.
inline SemanticBank expand_bank(const std::vector<int>& classes,
                                const std::vector<std::vector<double>>& spatial_bases,
                                const std::vector<std::vector<double>>& temporal_bases,
                                std::size_t phases, std::size_t descriptions, const BankNoise& noise,
                                std::mt19937_64& rng) {
  const std::size_t d = spatial_bases.front().size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::map<SemanticBank::CellKey, Tensor<float>> cells;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    for (Stream s : {Stream::spatial, Stream::temporal}) {
      const auto& base = s == Stream::spatial ? spatial_bases[ci] : temporal_bases[ci];
      for (std::size_t e = 0; e < phases; ++e) {
        std::vector<double> dir(d);
        double n = 0;
        for (auto& x : dir) {
          x = normal(rng);
          n += x * x;
        }
        n = std::sqrt(n);
        const double mag = phase_perturbation(noise, e);
        Tensor<float> cell({descriptions, d});
        for (std::size_t a = 0; a < descriptions; ++a)
          for (std::size_t k = 0; k < d; ++k)
            cell(a, k) = static_cast<float>(base[k] + mag * dir[k] / n +
                                            noise.description_std * normal(rng));
        cells.emplace(SemanticBank::CellKey{classes[ci], s, e}, std::move(cell));
      }
    }
  }
  return SemanticBank::from_cells(classes, phases, cells);
}

struct SynthBank {
  SemanticBank bank;
  std::vector<std::vector<double>> bases;  // one unit direction per class
};

/// Test fixture in place of text-encoder embeddings. Deterministic in `seed`.
inline SynthBank synth_bank_with_bases(std::size_t num_classes, std::size_t descriptions,
                                       std::size_t dim, std::uint64_t seed,
                                       std::size_t phases = 3, BankNoise noise = {}) {
  if (num_classes == 0 || descriptions == 0 || dim == 0) {
    throw ContractError("synth_bank needs positive class count, N_a and d");
  }
  std::mt19937_64 rng(seed);
  SynthBank out;
  out.bases = orthonormal_directions(num_classes, dim, rng);
  std::vector<int> classes(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) classes[i] = static_cast<int>(i);
  out.bank = expand_bank(classes, out.bases, out.bases, phases, descriptions, noise, rng);
  return out;
}

inline SemanticBank synth_bank(std::size_t num_classes, std::size_t descriptions, std::size_t dim,
                               std::uint64_t seed, std::size_t phases = 3) {
  return synth_bank_with_bases(num_classes, descriptions, dim, seed, phases).bank;
}

}  // namespace neuron
