// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <doctest.h>

#include <filesystem>

#include "resprune/data.hpp"

using namespace resprune;

namespace {

std::vector<std::uint8_t> idx_header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> out;
  auto be = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  be(magic);
  for (auto d : dims) be(d);
  return out;
}

}  // namespace

TEST_CASE("hand-built idx file with two 4x4 images") {
  auto img = idx_header(0x803, {2, 4, 4});
  for (int i = 0; i < 32; ++i) img.push_back(static_cast<std::uint8_t>(i * 8));
  CHECK(img.size() == 48);
  auto lab = idx_header(0x801, {2});
  lab.push_back(1);
  lab.push_back(0);
  const Dataset ds = parse_idx(img, lab);
  CHECK(ds.size() == 2);
  CHECK(ds.images.shape() == Shape{2, 1, 4, 4});
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.class_count == 2);
  CHECK(ds.images[17] == doctest::Approx(17 * 8 / 255.0));
  CHECK(encode_idx_images(ds) == img);
  CHECK(encode_idx_labels(ds) == lab);
}

TEST_CASE("idx with zero records is an empty dataset") {
  const Dataset ds = parse_idx(idx_header(0x803, {0, 4, 4}), idx_header(0x801, {0}), 3);
  CHECK(ds.size() == 0);
  CHECK(ds.class_count == 3);
  CHECK_THROWS_AS(sample_proxy_indices(ds, 4, 1), InvalidArgument);
}

TEST_CASE("idx format errors name the byte offset") {
  auto lab = idx_header(0x801, {1});
  lab.push_back(0);
  auto img = idx_header(0x802, {1, 2, 2});
  img.resize(img.size() + 4);
  try {
    parse_idx(img, lab);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
  }
  auto truncated = idx_header(0x803, {1, 2, 2});
  truncated.resize(truncated.size() + 3);
  CHECK_THROWS_AS(parse_idx(truncated, lab), FormatError);
  auto two = idx_header(0x803, {2, 2, 2});
  two.resize(two.size() + 8);
  CHECK_THROWS_AS(parse_idx(two, lab), FormatError);
}

TEST_CASE("idx files round-trip synthetic data bitwise") {
  SyntheticSpec spec;
  spec.samples_per_class = 3;
  const Dataset ds = make_synthetic(spec);
  const auto dir = std::filesystem::temp_directory_path() / "resprune_idx_test";
  std::filesystem::create_directories(dir);
  save_idx(ds, (dir / "img.idx").string(), (dir / "lab.idx").string());
  const Dataset back = load_idx((dir / "img.idx").string(), (dir / "lab.idx").string(), spec.class_count);
  CHECK(back.images == ds.images);
  CHECK(back.labels == ds.labels);
  CHECK(back.digest() == ds.digest());
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic generation is sized and deterministic") {
  SyntheticSpec spec;
  const Dataset a = make_synthetic(spec);
  CHECK(a.size() == 600);
  CHECK(a.images.shape() == Shape{600, 1, 32, 32});
  CHECK(make_synthetic(spec).digest() == a.digest());
  spec.seed = 8;
  CHECK(make_synthetic(spec).digest() != a.digest());
}

TEST_CASE("nearest-centroid probe on the patch beats chance") {
  SyntheticSpec spec;
  spec.samples_per_class = 40;
  const SyntheticData sd = make_synthetic_with_meta(spec);
  const std::size_t p = sd.patch_side, side = spec.side;
  auto patch = [&](std::size_t i) {
    std::vector<double> v;
    const auto img = sd.data.image(i);
    const auto [py, px] = sd.patch_origins[i];
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x) v.push_back(img[(py + y) * side + px + x]);
    return v;
  };
  // Centroids from even samples, evaluation on odd ones.
  std::vector<std::vector<double>> centroid(spec.class_count, std::vector<double>(p * p, 0.0));
  std::vector<std::size_t> count(spec.class_count, 0);
  for (std::size_t i = 0; i < sd.data.size(); i += 2) {
    const auto v = patch(i);
    const auto k = static_cast<std::size_t>(sd.data.labels[i]);
    for (std::size_t j = 0; j < v.size(); ++j) centroid[k][j] += v[j];
    ++count[k];
  }
  for (std::size_t k = 0; k < spec.class_count; ++k)
    for (auto& c : centroid[k]) c /= static_cast<double>(count[k]);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 1; i < sd.data.size(); i += 2) {
    const auto v = patch(i);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < spec.class_count; ++k) {
      double d = 0;
      for (std::size_t j = 0; j < v.size(); ++j) d += (v[j] - centroid[k][j]) * (v[j] - centroid[k][j]);
      if (d < best_d) best_d = d, best = k;
    }
    correct += best == static_cast<std::size_t>(sd.data.labels[i]);
    ++total;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(total);
  INFO("probe accuracy " << acc);
  CHECK(acc > 0.3);
}

TEST_CASE("proxy sampling") {
  SyntheticSpec spec;
  spec.samples_per_class = 30;
  const Dataset ds = make_synthetic(spec);
  const auto a = sample_proxy_indices(ds, 256, 5);
  CHECK(a.size() == 256);
  CHECK(a == sample_proxy_indices(ds, 256, 5));
  CHECK(a != sample_proxy_indices(ds, 256, 6));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(sample_proxy_indices(ds, 1000, 5).size() == ds.size());
}

TEST_CASE("normalisation statistics and batches") {
  SyntheticSpec spec;
  spec.samples_per_class = 5;
  const Dataset ds = make_synthetic(spec);
  const ChannelStats st = compute_stats(ds);
  REQUIRE(st.mean.size() == 1);
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Tensor<float> b = gather_batch(ds, all, st);
  double m = 0, v = 0;
  for (float x : b.data()) m += x;
  m /= static_cast<double>(b.numel());
  for (float x : b.data()) v += (x - m) * (x - m);
  v /= static_cast<double>(b.numel());
  CHECK(std::abs(m) < 1e-4);
  CHECK(std::abs(v - 1.0) < 1e-2);
}
