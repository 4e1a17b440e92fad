// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "neuron/io.hpp"
#include "neuron/tensor.hpp"

namespace neuron {

/// Raw joint coordinates of one sample, laid out [3 x T x V x M].
struct SkeletonSequence {
  Tensor<float> coords;
  int label = 0;

  std::size_t frames() const { return coords.empty() ? 0 : coords.dim(1); }
  std::size_t joints() const { return coords.dim(2); }
  std::size_t persons() const { return coords.dim(3); }

  float at(std::size_t axis, std::size_t t, std::size_t v, std::size_t m) const {
    const auto& s = coords.shape();
    return coords[((axis * s[1] + t) * s[2] + v) * s[3] + m];
  }
};

struct SkeletonDataset {
  std::size_t T = 0;
  std::size_t V = 0;
  std::size_t M = 0;
  std::vector<SkeletonSequence> samples;

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
  }
};

/// Uniform temporal resampling: output frame i reads source position
/// i*(T-1)/(target-1) with linear interpolation between neighbouring frames.
/// A single output frame samples the middle of the sequence.
inline SkeletonSequence resample(const SkeletonSequence& x, std::size_t target_frames) {
  if (x.coords.empty() || x.frames() == 0) throw InputError("cannot resample an empty sequence");
  if (target_frames == 0) throw ContractError("target frame count must be at least 1");
  const std::size_t T = x.frames(), V = x.joints(), M = x.persons();
  SkeletonSequence out;
  out.label = x.label;
  out.coords = Tensor<float>({3, target_frames, V, M});
  for (std::size_t i = 0; i < target_frames; ++i) {
    const double pos = target_frames == 1
                           ? static_cast<double>(T - 1) / 2.0
                           : static_cast<double>(i * (T - 1)) / static_cast<double>(target_frames - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, T - 1);
    const double w = pos - static_cast<double>(lo);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t v = 0; v < V; ++v)
        for (std::size_t m = 0; m < M; ++m) {
          const double lv = x.at(a, lo, v, m);
          const double hv = x.at(a, hi, v, m);
          const double val = w == 0.0 ? lv : (1.0 - w) * lv + w * hv;
          out.coords[((a * target_frames + i) * V + v) * M + m] = static_cast<float>(val);
        }
  }
  return out;
}

/// Writes `<stem>.json` + `<stem>.bin`.
inline void save_skeletons(const std::filesystem::path& manifest, const SkeletonDataset& ds) {
  io::json doc;
  doc["format"] = "neuron.skeleton";
  doc["count"] = ds.samples.size();
  doc["T"] = ds.T;
  doc["V"] = ds.V;
  doc["M"] = ds.M;
  doc["labels"] = ds.labels();
  doc["payload"] = io::payload_path_for(manifest).filename().string();
  std::vector<float> payload;
  payload.reserve(ds.samples.size() * 3 * ds.T * ds.V * ds.M);
  for (const auto& s : ds.samples) {
    if (s.coords.shape() != Shape{3, ds.T, ds.V, ds.M}) {
      throw DimensionError("sample shape " + shape_str(s.coords.shape()) +
                           " does not match dataset header");
    }
    payload.insert(payload.end(), s.coords.data().begin(), s.coords.data().end());
  }
  io::write_json(manifest, doc);
  io::write_f32(io::payload_path_for(manifest), payload);
}

inline SkeletonDataset load_skeletons(const std::filesystem::path& manifest) {
  const io::json doc = io::read_json(manifest);
  SkeletonDataset ds;
  const auto count = io::field<std::size_t>(doc, "count", manifest);
  ds.T = io::field<std::size_t>(doc, "T", manifest);
  ds.V = io::field<std::size_t>(doc, "V", manifest);
  ds.M = io::field<std::size_t>(doc, "M", manifest);
  const auto labels = io::field<std::vector<int>>(doc, "labels", manifest);
  if (ds.T == 0 || ds.V == 0 || ds.M == 0) throw FormatError(manifest.string() + ": zero dimension");
  if (labels.size() != count) throw FormatError(manifest.string() + ": labels length != count");
  const auto payload_file = io::resolve_payload(manifest, doc);
  const std::vector<float> payload = io::read_f32(payload_file);
  const std::size_t per = 3 * ds.T * ds.V * ds.M;
  io::expect_count(payload_file, payload.size(), per * count);
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SkeletonSequence s;
    s.label = labels[i];
    s.coords = Tensor<float>({3, ds.T, ds.V, ds.M},
                             std::vector<float>(payload.begin() + static_cast<std::ptrdiff_t>(i * per),
                                                payload.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)));
    if (!s.coords.all_finite()) throw FormatError(manifest.string() + ": non-finite coordinate in sample " + std::to_string(i));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// Encoded representation F [T_hat x V_hat x C] with its pooled views.
template <class T>
struct FeatureMap {
  Tensor<T> F;
  Tensor<T> Fs;  // mean over the time axis, [V_hat x C]
  Tensor<T> Ft;  // mean over the joint axis, [T_hat x C]
  int label = 0;

  std::size_t t_hat() const { return F.dim(0); }
  std::size_t v_hat() const { return F.dim(1); }
  std::size_t channels() const { return F.dim(2); }
};

/// Recomputes Fs and Ft from F.
template <class T>
FeatureMap<T> make_feature_map(Tensor<T> F, int label = 0) {
  if (F.rank() != 3) throw DimensionError("feature map must be [T_hat x V_hat x C], got " + shape_str(F.shape()));
  const std::size_t Th = F.dim(0), Vh = F.dim(1), C = F.dim(2);
  FeatureMap<T> fm;
  fm.Fs = Tensor<T>({Vh, C});
  fm.Ft = Tensor<T>({Th, C});
  for (std::size_t t = 0; t < Th; ++t)
    for (std::size_t v = 0; v < Vh; ++v)
      for (std::size_t c = 0; c < C; ++c) {
        const T x = F[(t * Vh + v) * C + c];
        fm.Fs[v * C + c] += x;
        fm.Ft[t * C + c] += x;
      }
  for (auto& x : fm.Fs.data()) x /= static_cast<T>(Th);
  for (auto& x : fm.Ft.data()) x /= static_cast<T>(Vh);
  fm.F = std::move(F);
  fm.label = label;
  return fm;
}

inline void save_features(const std::filesystem::path& manifest,
                          const std::vector<FeatureMap<float>>& maps) {
  if (maps.empty()) throw ContractError("no feature maps to save");
  const Shape shape = maps.front().F.shape();
  io::json doc;
  doc["format"] = "neuron.features";
  doc["count"] = maps.size();
  doc["T_hat"] = shape[0];
  doc["V_hat"] = shape[1];
  doc["C"] = shape[2];
  std::vector<int> labels;
  std::vector<float> payload;
  for (const auto& m : maps) {
    if (m.F.shape() != shape) throw DimensionError("feature maps of mixed shapes");
    labels.push_back(m.label);
    payload.insert(payload.end(), m.F.data().begin(), m.F.data().end());
  }
  doc["labels"] = labels;
  doc["payload"] = io::payload_path_for(manifest).filename().string();
  io::write_json(manifest, doc);
  io::write_f32(io::payload_path_for(manifest), payload);
}

/// Loads precomputed backbone features. Pooled views are recomputed locally;
/// T_hat must split evenly into `phases` temporal segments.
inline std::vector<FeatureMap<float>> load_features(const std::filesystem::path& manifest,
                                                    std::size_t phases) {
  const io::json doc = io::read_json(manifest);
  const auto count = io::field<std::size_t>(doc, "count", manifest);
  const auto Th = io::field<std::size_t>(doc, "T_hat", manifest);
  const auto Vh = io::field<std::size_t>(doc, "V_hat", manifest);
  const auto C = io::field<std::size_t>(doc, "C", manifest);
  const auto labels = io::field<std::vector<int>>(doc, "labels", manifest);
  if (Th == 0 || Vh == 0 || C == 0) throw FormatError(manifest.string() + ": zero dimension");
  if (labels.size() != count) throw FormatError(manifest.string() + ": labels length != count");
  if (phases == 0 || Th % phases != 0) {
    throw FormatError(manifest.string() + ": T_hat=" + std::to_string(Th) +
                      " is not divisible by the phase count " + std::to_string(phases));
  }
  const auto payload_file = io::resolve_payload(manifest, doc);
  const std::vector<float> payload = io::read_f32(payload_file);
  const std::size_t per = Th * Vh * C;
  io::expect_count(payload_file, payload.size(), per * count);
  std::vector<FeatureMap<float>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> F({Th, Vh, C},
                    std::vector<float>(payload.begin() + static_cast<std::ptrdiff_t>(i * per),
                                       payload.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)));
    if (!F.all_finite()) throw FormatError(manifest.string() + ": non-finite feature in sample " + std::to_string(i));
    out.push_back(make_feature_map(std::move(F), labels[i]));
  }
  return out;
}

}  // namespace neuron
