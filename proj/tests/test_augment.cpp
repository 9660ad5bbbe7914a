// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "resprune/augment.hpp"
#include "resprune/error.hpp"
#include "resprune/schedule.hpp"

using namespace resprune;

namespace {

Tensor<float> ramp_image(std::size_t c, std::size_t h, std::size_t w) {
  Tensor<float> t({c, h, w});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
  return t;
}

Dataset small_set(std::size_t n) {
  Dataset ds;
  ds.images = Tensor<float>({n, 1, 12, 12});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : ds.images.data()) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(i % 3));
  ds.class_count = 3;
  return ds;
}

}  // namespace

TEST_CASE("mixup endpoints and arithmetic") {
  Tensor<float> xa({1, 1, 1, 2}), xb({1, 1, 1, 2}), ya({1, 2}), yb({1, 2});
  xa[0] = 1.f, xa[1] = 3.f, xb[0] = 5.f, xb[1] = -1.f;
  ya[0] = 1.f, yb[1] = 1.f;
  auto m = mixup_with_lambda(xa, ya, xb, yb, 0.25);
  CHECK(m.x[0] == doctest::Approx(4.0));
  CHECK(m.x[1] == doctest::Approx(0.0));
  CHECK(m.y[0] == doctest::Approx(0.25));
  CHECK(m.y[1] == doctest::Approx(0.75));
  auto one = mixup_with_lambda(xa, ya, xb, yb, 1.0);
  CHECK(std::equal(one.x.data().begin(), one.x.data().end(), xa.data().begin()));
  auto zero = mixup_with_lambda(xa, ya, xb, yb, 0.0);
  CHECK(std::equal(zero.x.data().begin(), zero.x.data().end(), xb.data().begin()));
  CHECK_THROWS_AS(mixup_with_lambda(xa, ya, xb, yb, 1.5), InvalidArgument);
}

TEST_CASE("beta(1,1) draws stay in [0,1] with mean near 1/2") {
  std::mt19937_64 rng(1);
  double sum = 0;
  for (int i = 0; i < 4000; ++i) {
    const double l = sample_beta(1.0, 1.0, rng);
    REQUIRE(l >= 0.0);
    REQUIRE(l <= 1.0);
    sum += l;
  }
  CHECK(sum / 4000 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("rotation by zero is the identity, 180 degrees reverses") {
  const Tensor<float> img = ramp_image(2, 5, 7);
  const Tensor<float> same = rotate(img, 0.0, {0.f, 0.f});
  CHECK(std::equal(same.data().begin(), same.data().end(), img.data().begin()));
  const Tensor<float> flipped = rotate(img, 180.0, {0.f, 0.f}, Interp::kNearest);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t q = 0; q < 7; ++q) REQUIRE(flipped[(c * 5 + r) * 7 + q] == img[(c * 5 + 4 - r) * 7 + 6 - q]);
}

TEST_CASE("rotation fills uncovered corners") {
  Tensor<float> img({1, 9, 9});
  img.fill(1.f);
  const Tensor<float> r = rotate(img, 45.0, {-2.f});
  CHECK(r[0] == -2.f);
  CHECK(r[4 * 9 + 4] == doctest::Approx(1.0));
}

TEST_CASE("cutout of factor 0.2 on a 32 image is a 6x6 square") {
  Tensor<float> img({1, 32, 32});
  img.fill(1.f);
  const std::size_t side = static_cast<std::size_t>(std::floor(0.2 * 32));
  CHECK(side == 6);
  const Tensor<float> out = cutout_at(img, 10, 12, side, {0.f});
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) {
      const bool inside = r >= 10 && r < 16 && c >= 12 && c < 18;
      zeros += out[r * 32 + c] == 0.f;
      REQUIRE((out[r * 32 + c] == 0.f) == inside);
    }
  CHECK(zeros == 36);
  // Clipped at the corner.
  const Tensor<float> corner = cutout_at(img, -3, -3, side, {0.f});
  CHECK(std::count(corner.data().begin(), corner.data().end(), 0.f) == 9);
}

TEST_CASE("random cutout stays within its size range") {
  Tensor<float> img({1, 32, 32});
  img.fill(1.f);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Tensor<float> out = cutout(img, rng, {0.f});
    const auto z = std::count(out.data().begin(), out.data().end(), 0.f);
    REQUIRE(z >= 1);
    REQUIRE(z <= 16 * 16);
  }
  Tensor<float> tiny({1, 4, 4});
  CHECK_THROWS_AS(cutout(tiny, rng, {0.f}), InvalidArgument);
}

TEST_CASE("tile shuffle with identity permutation is exact, others permute pixels") {
  const Tensor<float> img = ramp_image(1, 12, 12);
  for (std::size_t n : {2u, 3u, 4u}) {
    std::vector<std::size_t> id(n * n);
    std::iota(id.begin(), id.end(), 0);
    const Tensor<float> same = shuffle_tiles(img, n, id);
    REQUIRE(std::equal(same.data().begin(), same.data().end(), img.data().begin()));
    std::vector<std::size_t> rev(id.rbegin(), id.rend());
    const Tensor<float> out = shuffle_tiles(img, n, rev);
    std::vector<float> a(img.data().begin(), img.data().end()), b(out.data().begin(), out.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);  // 12 divides evenly, so the pixel multiset is preserved
    CHECK(out[0] == img[(12 - 12 / n) * 12 + 12 - 12 / n]);
  }
  CHECK_THROWS_AS(shuffle_tiles(img, 5, std::vector<std::size_t>(25)), InvalidArgument);
  CHECK_THROWS_AS(shuffle_tiles(img, 2, {0, 0, 1, 2}), InvalidArgument);
}

TEST_CASE("uneven tiles keep the image size") {
  const Tensor<float> img = ramp_image(1, 10, 10);
  std::mt19937_64 rng(2);
  const Tensor<float> out = shuffle(img, 3, rng);
  CHECK(out.shape() == img.shape());
}

TEST_CASE("hflip mirrors columns") {
  const Tensor<float> img = ramp_image(1, 2, 3);
  const Tensor<float> f = hflip(img);
  CHECK(f[0] == 2.f);
  CHECK(f[2] == 0.f);
  CHECK(f[3] == 5.f);
}

TEST_CASE("expansion gives six blocks with labels and deterministic digests") {
  const Dataset ds = small_set(9);
  const ExpandedDataset a = expand_dataset(ds, 11);
  const ExpandedDataset b = expand_dataset(ds, 11);
  const ExpandedDataset c = expand_dataset(ds, 12);
  REQUIRE(a.data.size() == 6 * ds.size());
  REQUIRE(a.provenance.size() == a.data.size());
  for (std::size_t r = 0; r < a.data.size(); ++r) {
    REQUIRE(a.provenance[r].source == r % ds.size());
    REQUIRE(static_cast<std::size_t>(a.provenance[r].transform) == r / ds.size());
    REQUIRE(a.data.labels[r] == ds.labels[r % ds.size()]);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.image(i), y = a.data.image(i);
    REQUIRE(std::equal(x.begin(), x.end(), y.begin()));
  }
  CHECK(a.data.digest() == b.data.digest());
  CHECK(a.data.digest() != c.data.digest());
  CHECK(transform_name(Transform::kShuffle3) == "shuffle3");
}

TEST_CASE("cosine schedule warms up and decays to zero") {
  const WarmupCosine s(0.1, 100, 10);
  CHECK(s.at(0) == doctest::Approx(0.01));
  CHECK(s.at(9) == doctest::Approx(0.1));
  CHECK(s.at(10) == doctest::Approx(0.1));
  CHECK(s.at(99) < 1e-3);
  CHECK(s.at(100) < 1e-8 * 0.1);
  for (std::size_t i = 11; i < 100; ++i) REQUIRE(s.at(i) <= s.at(i - 1));
  const WarmupCosine flat(1e-4, 50);
  CHECK(flat.at(0) == doctest::Approx(1e-4));
}
