// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resprune/tensor.hpp"

namespace resprune {

/// Labelled image set. Pixel values lie in [0, 1]; normalisation is applied
/// when batches are gathered.
struct Dataset {
  Tensor<float> images;  // [N, C, H, W]
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t image_numel() const { return channels() * height() * width(); }
  std::span<const float> image(std::size_t i) const {
    return images.data().subspan(i * image_numel(), image_numel());
  }
  std::span<float> image(std::size_t i) { return images.data().subspan(i * image_numel(), image_numel()); }

  /// Content digest over shape, pixels and labels.
  std::string digest() const;
  /// Throws unless images and labels agree and every label is in range.
  void validate() const;
};

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Per-channel mean and standard deviation (training split only).
ChannelStats compute_stats(const Dataset& ds);

/// Copies the selected images into one normalised batch [n, C, H, W].
Tensor<float> gather_batch(const Dataset& ds, std::span<const std::size_t> indices, const ChannelStats& stats);
std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices);
Tensor<float> one_hot(std::span<const int> labels, std::size_t class_count);

// IDX: big-endian magic 0x00000803 (u8 images, rank 3) / 0x00000801 (u8
// labels, rank 1), big-endian u32 dims, row-major u8 payload.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t class_count = 0);
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t class_count = 0);
/// Writes single-channel datasets; pixels are rounded to the u8 grid.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);
std::vector<std::uint8_t> encode_idx_images(const Dataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds);

struct SyntheticSpec {
  std::size_t class_count = 10;
  std::size_t samples_per_class = 60;
  std::size_t side = 32;
  std::uint64_t seed = 7;
  /// Per-pixel Gaussian noise level.
  double noise = 0.08;
  /// Amplitude of the class-coding patch.
  double patch_contrast = 0.35;
  /// Amplitude of the background texture.
  double texture_contrast = 0.2;
};

struct SyntheticData {
  Dataset data;
  /// Top-left corner (row, col) of each sample's class-coding patch.
  std::vector<std::array<std::size_t, 2>> patch_origins;
  std::size_t patch_side = 0;
};

/// Grayscale images: a randomly oriented background grating whose frequency
/// group hints at the class, Gaussian noise, and a radially symmetric patch
/// at a random location whose ring frequency identifies the class. Samples
/// are ordered class-major and regenerate bit-identically from the spec.
SyntheticData make_synthetic_with_meta(const SyntheticSpec& spec);
Dataset make_synthetic(const SyntheticSpec& spec);

/// Uniform sample without replacement; n larger than the dataset returns
/// every index (with a warning).
std::vector<std::size_t> sample_proxy_indices(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Derives an independent 64-bit seed from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace resprune
