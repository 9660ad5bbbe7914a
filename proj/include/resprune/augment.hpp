// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "resprune/data.hpp"

namespace resprune {

struct MixupBatch {
  Tensor<float> x;  // lambda * x_a + (1 - lambda) * x_b
  Tensor<float> y;  // soft labels, same mix
  double lambda = 1;
};

/// Draws one lambda ~ Beta(a, a) for the whole batch.
MixupBatch mixup(const Tensor<float>& xa, const Tensor<float>& ya, const Tensor<float>& xb, const Tensor<float>& yb,
                 double a, std::mt19937_64& rng);
MixupBatch mixup_with_lambda(const Tensor<float>& xa, const Tensor<float>& ya, const Tensor<float>& xb,
                             const Tensor<float>& yb, double lambda);
double sample_beta(double a, double b, std::mt19937_64& rng);

// Image transforms act on one [C, H, W] image. `fill` holds one value per channel.
enum class Interp { kBilinear, kNearest };

/// Rotation about the image centre by `degrees` (counter-clockwise in
/// row/column space); uncovered pixels take `fill`.
Tensor<float> rotate(const Tensor<float>& image, double degrees, const std::vector<float>& fill,
                     Interp interp = Interp::kBilinear);
/// Square of `side` pixels with top-left (top, left), clipped at the border.
Tensor<float> cutout_at(const Tensor<float>& image, long top, long left, std::size_t side,
                        const std::vector<float>& fill);
/// Side = floor(f * image side), f ~ U[0.2, 0.5]; centre uniform over the image.
Tensor<float> cutout(const Tensor<float>& image, std::mt19937_64& rng, const std::vector<float>& fill);
/// Splits into an n x n tile grid (edge tiles absorb the remainder) and
/// places source tile perm[t] at position t. Tiles of different sizes are
/// resampled by nearest neighbour.
Tensor<float> shuffle_tiles(const Tensor<float>& image, std::size_t n, const std::vector<std::size_t>& perm);
Tensor<float> shuffle(const Tensor<float>& image, std::size_t n, std::mt19937_64& rng);
Tensor<float> hflip(const Tensor<float>& image);

enum class Transform { kOriginal, kRotate, kCutout, kShuffle2, kShuffle3, kShuffle4 };
std::string transform_name(Transform t);

struct Provenance {
  std::size_t source = 0;
  Transform transform = Transform::kOriginal;
};

struct ExpandedDataset {
  Dataset data;
  std::vector<Provenance> provenance;
};

/// The original records followed by one rotated, one cut-out and three
/// tile-shuffled copies of each (6x in total). Record i of block t uses a
/// generator seeded from (seed, t * n + i).
ExpandedDataset expand_dataset(const Dataset& ds, std::uint64_t seed);

/// JSON sidecar listing per-record provenance and the dataset digest.
void save_provenance(const ExpandedDataset& ex, std::uint64_t seed, const std::string& path);

}  // namespace resprune
