// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include "resprune/digest.hpp"
#include "resprune/log.hpp"

namespace resprune {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::uint32_t read_be32(std::span<const std::uint8_t> buf, std::size_t offset, const char* what) {
  if (offset + 4 > buf.size()) {
    throw FormatError(std::string("idx ") + what + ": truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the combined state.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string Dataset::digest() const {
  Fnv1a h;
  for (auto d : images.shape()) h.update_value(static_cast<std::uint64_t>(d));
  h.update_span(images.data());
  h.update_span(std::span<const int>(labels));
  h.update_value(static_cast<std::uint64_t>(class_count));
  return h.hex();
}

void Dataset::validate() const {
  if (images.rank() != 4) throw ShapeError("dataset: images must be [N,C,H,W], got " + shape_str(images.shape()));
  if (images.dim(0) != labels.size()) {
    throw ShapeError("dataset: " + std::to_string(images.dim(0)) + " images but " + std::to_string(labels.size()) +
                     " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw InvalidArgument("dataset: label " + std::to_string(labels[i]) + " of record " + std::to_string(i) +
                            " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

ChannelStats compute_stats(const Dataset& ds) {
  const std::size_t c = ds.channels(), hw = ds.height() * ds.width();
  ChannelStats st{std::vector<float>(c, 0.0f), std::vector<float>(c, 1.0f)};
  if (ds.size() == 0) return st;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0, sq = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const float* p = ds.images.ptr() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        s += p[k];
        sq += static_cast<double>(p[k]) * p[k];
      }
    }
    const double n = static_cast<double>(ds.size() * hw);
    const double mean = s / n;
    const double var = std::max(sq / n - mean * mean, 0.0);
    st.mean[ch] = static_cast<float>(mean);
    st.stddev[ch] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return st;
}

Tensor<float> gather_batch(const Dataset& ds, std::span<const std::size_t> indices, const ChannelStats& stats) {
  const std::size_t c = ds.channels(), hw = ds.height() * ds.width();
  if (stats.mean.size() != c || stats.stddev.size() != c) {
    throw ShapeError("gather_batch: normalisation stats for " + std::to_string(stats.mean.size()) +
                     " channels, dataset has " + std::to_string(c));
  }
  Tensor<float> out({indices.size(), c, ds.height(), ds.width()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size()) throw InvalidArgument("gather_batch: index out of range");
    auto src = ds.image(indices[i]);
    float* dst = out.ptr() + i * c * hw;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float m = stats.mean[ch], inv = 1.0f / stats.stddev[ch];
      for (std::size_t k = 0; k < hw; ++k) dst[ch * hw + k] = (src[ch * hw + k] - m) * inv;
    }
  }
  return out;
}

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.labels.at(i));
  return out;
}

Tensor<float> one_hot(std::span<const int> labels, std::size_t class_count) {
  Tensor<float> out({labels.size(), class_count});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw InvalidArgument("one_hot: label " + std::to_string(labels[i]) + " out of range");
    }
    out[i * class_count + static_cast<std::size_t>(labels[i])] = 1.0f;
  }
  return out;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.class_count = ds.class_count;
  out.split = ds.split;
  out.images = Tensor<float>({indices.size(), ds.channels(), ds.height(), ds.width()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = ds.image(indices[i]);
    std::copy(src.begin(), src.end(), out.image(i).begin());
    out.labels.push_back(ds.labels[indices[i]]);
  }
  return out;
}

// --- IDX ---------------------------------------------------------------------

Dataset parse_idx(std::span<const std::uint8_t> img, std::span<const std::uint8_t> lab, std::size_t class_count) {
  const std::uint32_t im_magic = read_be32(img, 0, "images");
  if (im_magic != kIdxImages) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "idx images: bad magic 0x%08x at byte 0 (expected 0x%08x)", im_magic, kIdxImages);
    throw FormatError(buf);
  }
  const std::uint32_t n = read_be32(img, 4, "images");
  const std::uint32_t h = read_be32(img, 8, "images");
  const std::uint32_t w = read_be32(img, 12, "images");
  const std::size_t payload = static_cast<std::size_t>(n) * h * w;
  if (img.size() < 16 + payload) {
    throw FormatError("idx images: truncated payload at byte " + std::to_string(img.size()) + " (expected " +
                      std::to_string(16 + payload) + " bytes)");
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, "labels");
  if (lab_magic != kIdxLabels) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "idx labels: bad magic 0x%08x at byte 0 (expected 0x%08x)", lab_magic, kIdxLabels);
    throw FormatError(buf);
  }
  const std::uint32_t ln = read_be32(lab, 4, "labels");
  if (ln != n) {
    throw FormatError("idx: label count " + std::to_string(ln) + " at byte 4 does not match image count " +
                      std::to_string(n));
  }
  if (lab.size() < 8 + static_cast<std::size_t>(ln)) {
    throw FormatError("idx labels: truncated payload at byte " + std::to_string(lab.size()) + " (expected " +
                      std::to_string(8 + static_cast<std::size_t>(ln)) + " bytes)");
  }
  Dataset ds;
  ds.images = Tensor<float>({n, 1, h, w});
  for (std::size_t i = 0; i < payload; ++i) ds.images[i] = from_u8(img[16 + i]);
  int max_label = -1;
  for (std::size_t i = 0; i < ln; ++i) {
    ds.labels.push_back(lab[8 + i]);
    max_label = std::max(max_label, static_cast<int>(lab[8 + i]));
  }
  ds.class_count = class_count ? class_count : static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t class_count) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  return parse_idx(img, lab, class_count);
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds) {
  if (ds.images.rank() != 4 || ds.channels() != 1) {
    throw InvalidArgument("idx: only single-channel datasets can be written, got " + shape_str(ds.images.shape()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + ds.images.numel());
  write_be32(out, kIdxImages);
  write_be32(out, static_cast<std::uint32_t>(ds.size()));
  write_be32(out, static_cast<std::uint32_t>(ds.height()));
  write_be32(out, static_cast<std::uint32_t>(ds.width()));
  for (float v : ds.images.data()) out.push_back(to_u8(v));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxLabels);
  write_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) {
    if (l < 0 || l > 255) throw InvalidArgument("idx: label " + std::to_string(l) + " does not fit in u8");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  write_file(images_path, encode_idx_images(ds));
  write_file(labels_path, encode_idx_labels(ds));
}

// --- synthetic ---------------------------------------------------------------

SyntheticData make_synthetic_with_meta(const SyntheticSpec& spec) {
  if (spec.class_count == 0 || spec.side < 8) {
    throw InvalidArgument("make_synthetic: need class_count > 0 and side >= 8");
  }
  if (spec.class_count > 256) throw InvalidArgument("make_synthetic: at most 256 classes");
  const std::size_t side = spec.side;
  const std::size_t patch = std::max<std::size_t>(side / 4, 5);
  const std::size_t n = spec.class_count * spec.samples_per_class;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  SyntheticData out;
  out.patch_side = patch;
  out.data.class_count = spec.class_count;
  out.data.images = Tensor<float>({n, 1, side, side});
  out.data.labels.resize(n);
  out.patch_origins.resize(n);

  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::size_t k = idx / std::max<std::size_t>(spec.samples_per_class, 1);
    std::mt19937_64 rng(derive_seed(spec.seed, idx));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Background grating: frequency group k mod 5 with jitter, random orientation.
    const double group = static_cast<double>(k % 5);
    const double freq = (0.06 + 0.035 * group) * (1.0 + 0.12 * gauss(rng));
    const double theta = uni(rng) * std::numbers::pi;
    const double phase = uni(rng) * kTwoPi;
    const double ct = std::cos(theta), st = std::sin(theta);

    // Class-coding patch: radial cosine under a Gaussian window.
    const double ring = 0.07 + 0.32 * static_cast<double>(k) / std::max(1.0, static_cast<double>(spec.class_count - 1));
    const double ring_phase = (k % 2 == 0) ? 0.0 : std::numbers::pi / 2;
    const std::size_t py = static_cast<std::size_t>(uni(rng) * static_cast<double>(side - patch + 1));
    const std::size_t px = static_cast<std::size_t>(uni(rng) * static_cast<double>(side - patch + 1));
    const double amp = spec.patch_contrast * (0.75 + 0.5 * uni(rng));
    const double centre = (static_cast<double>(patch) - 1.0) / 2.0;
    const double sigma = static_cast<double>(patch) / 3.0;

    float* img = out.data.images.ptr() + idx * side * side;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double u = ct * static_cast<double>(x) + st * static_cast<double>(y);
        double v = 0.5 + spec.texture_contrast * std::cos(kTwoPi * freq * u + phase);
        if (y >= py && y < py + patch && x >= px && x < px + patch) {
          const double dy = static_cast<double>(y - py) - centre, dx = static_cast<double>(x - px) - centre;
          const double r = std::sqrt(dx * dx + dy * dy);
          const double window = std::exp(-r * r / (2 * sigma * sigma));
          // The patch replaces the texture under its window.
          v = v * (1 - window) + window * (0.5 + amp * std::cos(kTwoPi * ring * r + ring_phase));
        }
        v += spec.noise * gauss(rng);
        img[y * side + x] = from_u8(to_u8(v));
      }
    }
    out.data.labels[idx] = static_cast<int>(k);
    out.patch_origins[idx] = {py, px};
  }
  return out;
}

Dataset make_synthetic(const SyntheticSpec& spec) { return make_synthetic_with_meta(spec).data; }

std::vector<std::size_t> sample_proxy_indices(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (ds.size() == 0) throw InvalidArgument("sample_proxy: dataset is empty");
  if (n > ds.size()) {
    logger()->warn("proxy size {} exceeds dataset size {}; using every record", n, ds.size());
    n = ds.size();
  }
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with explicit bounded draws (portable across stdlibs).
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t span = idx.size() - i;
    const std::size_t j = i + static_cast<std::size_t>(rng() % span);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace resprune
