// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <fstream>

#include "support.hpp"

using namespace neuron;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

SkeletonSequence make_sequence(std::size_t T, std::size_t V, std::size_t M, std::mt19937_64& rng) {
  SkeletonSequence s;
  s.coords = testing::random_tensor<float>({3, T, V, M}, rng);
  return s;
}

void truncate_file(const std::filesystem::path& p, std::size_t drop) {
  const auto size = std::filesystem::file_size(p);
  std::filesystem::resize_file(p, size - drop);
}

}  // namespace

TEST_CASE("resample identity, constants and midpoint") {
  std::mt19937_64 rng(1);
  auto x = make_sequence(64, 5, 2, rng);
  CHECK(resample(x, 64).coords == x.coords);

  SkeletonSequence c;
  c.coords = Tensor<float>({3, 7, 2, 1}, 0.625f);
  for (std::size_t target : {1u, 3u, 10u, 64u}) {
    auto r = resample(c, target);
    CHECK(r.frames() == target);
    for (float v : r.coords.data()) CHECK(v == 0.625f);
  }

  auto two = make_sequence(2, 3, 1, rng);
  auto three = resample(two, 3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t v = 0; v < 3; ++v) {
      CHECK(three.at(a, 0, v, 0) == two.at(a, 0, v, 0));
      CHECK(three.at(a, 2, v, 0) == two.at(a, 1, v, 0));
      CHECK(three.at(a, 1, v, 0) == Approx((two.at(a, 0, v, 0) + two.at(a, 1, v, 0)) / 2.0).margin(1e-7));
    }
}

TEST_CASE("resample rejects empty input and zero targets") {
  SkeletonSequence empty;
  CHECK_THROWS_AS(resample(empty, 4), InputError);
  std::mt19937_64 rng(2);
  CHECK_THROWS_AS(resample(make_sequence(4, 2, 1, rng), 0), ContractError);
}

TEST_CASE("skeleton dataset round-trips") {
  testing::TempDir dir("skel");
  std::mt19937_64 rng(3);
  SkeletonDataset ds{6, 4, 2, {}};
  for (int i = 0; i < 5; ++i) {
    auto s = make_sequence(6, 4, 2, rng);
    s.label = i * 3;
    ds.samples.push_back(s);
  }
  save_skeletons(dir / "ds.json", ds);
  auto back = load_skeletons(dir / "ds.json");
  CHECK(back.T == 6);
  CHECK(back.labels() == ds.labels());
  for (std::size_t i = 0; i < 5; ++i) CHECK(back.samples[i].coords == ds.samples[i].coords);

  truncate_file(dir / "ds.bin", 8);
  CHECK_THROWS_AS(load_skeletons(dir / "ds.json"), FormatError);
}

TEST_CASE("pooled views equal recomputed means") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto F = testing::random_tensor<double>({6, 5, 3}, rng, -5, 5);
    auto fm = make_feature_map(F);
    for (std::size_t v = 0; v < 5; ++v)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t t = 0; t < 6; ++t) s += F[(t * 5 + v) * 3 + c];
        CHECK(fm.Fs(v, c) == Approx(s / 6).margin(1e-12));
      }
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t v = 0; v < 5; ++v) s += F[(t * 5 + v) * 3 + c];
        CHECK(fm.Ft(t, c) == Approx(s / 5).margin(1e-12));
      }
  }
  CHECK_THROWS_AS(make_feature_map(Tensor<double>({2, 3})), DimensionError);
}

TEST_CASE("feature files round-trip and reject corruption") {
  testing::TempDir dir("feat");
  std::mt19937_64 rng(5);
  std::vector<FeatureMap<float>> maps;
  for (int i = 0; i < 3; ++i) maps.push_back(make_feature_map(testing::random_tensor<float>({12, 4, 5}, rng), i));
  save_features(dir / "f.json", maps);
  auto doc = io::read_json(dir / "f.json");
  CHECK(doc.at("T_hat") == 12);
  CHECK(doc.at("V_hat") == 4);
  CHECK(doc.at("C") == 5);

  auto back = load_features(dir / "f.json", 3);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].F == maps[i].F);
    CHECK(back[i].label == static_cast<int>(i));
    for (std::size_t k = 0; k < back[i].Fs.size(); ++k) CHECK(back[i].Fs[k] == Approx(maps[i].Fs[k]).margin(1e-6));
  }

  CHECK_THROWS_WITH(load_features(dir / "f.json", 5), ContainsSubstring("not divisible"));

  truncate_file(dir / "f.bin", 4);
  CHECK_THROWS_AS(load_features(dir / "f.json", 3), FormatError);
  CHECK_THROWS_WITH(load_features(dir / "f.json", 3), ContainsSubstring("byte"));
}

TEST_CASE("feature header mismatches are rejected") {
  testing::TempDir dir("feat");
  std::mt19937_64 rng(6);
  std::vector<FeatureMap<float>> maps{make_feature_map(testing::random_tensor<float>({3, 2, 2}, rng), 1)};
  save_features(dir / "f.json", maps);
  auto doc = io::read_json(dir / "f.json");
  doc["C"] = 3;
  io::write_json(dir / "f.json", doc);
  CHECK_THROWS_AS(load_features(dir / "f.json", 3), FormatError);
  doc["C"] = 2;
  doc["labels"] = {1, 2};
  io::write_json(dir / "f.json", doc);
  CHECK_THROWS_AS(load_features(dir / "f.json", 3), FormatError);
}
