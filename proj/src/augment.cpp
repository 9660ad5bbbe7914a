// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace resprune {

double sample_beta(double a, double b, std::mt19937_64& rng) {
  if (!(a > 0) || !(b > 0)) throw InvalidArgument("beta parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng), y = gb(rng);
  return x + y > 0 ? x / (x + y) : 0.5;
}

MixupBatch mixup_with_lambda(const Tensor<float>& xa, const Tensor<float>& ya, const Tensor<float>& xb,
                             const Tensor<float>& yb, double lambda) {
  if (xa.shape() != xb.shape() || ya.shape() != yb.shape()) {
    throw ShapeError("mixup: batch shapes " + shape_str(xa.shape()) + " and " + shape_str(xb.shape()) + " differ");
  }
  if (!(lambda >= 0 && lambda <= 1)) throw InvalidArgument("mixup: lambda must lie in [0, 1]");
  MixupBatch out;
  out.lambda = lambda;
  const auto l = static_cast<float>(lambda), r = static_cast<float>(1.0 - lambda);
  out.x = Tensor<float>(xa.shape());
  for (std::size_t i = 0; i < xa.numel(); ++i) out.x[i] = l * xa[i] + r * xb[i];
  out.y = Tensor<float>(ya.shape());
  for (std::size_t i = 0; i < ya.numel(); ++i) out.y[i] = l * ya[i] + r * yb[i];
  return out;
}

MixupBatch mixup(const Tensor<float>& xa, const Tensor<float>& ya, const Tensor<float>& xb, const Tensor<float>& yb,
                 double a, std::mt19937_64& rng) {
  if (!(a > 0)) throw InvalidArgument("mixup: beta parameter must be positive");
  return mixup_with_lambda(xa, ya, xb, yb, sample_beta(a, a, rng));
}

namespace {

void check_image(const Tensor<float>& image, const std::vector<float>* fill, const char* op) {
  if (image.rank() != 3) throw ShapeError(std::string(op) + ": expects [C, H, W], got " + shape_str(image.shape()));
  if (fill && fill->size() != image.dim(0)) {
    throw InvalidArgument(std::string(op) + ": fill has " + std::to_string(fill->size()) + " values for " +
                          std::to_string(image.dim(0)) + " channels");
  }
}

}  // namespace

Tensor<float> rotate(const Tensor<float>& image, double degrees, const std::vector<float>& fill, Interp interp) {
  check_image(image, &fill, "rotate");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (static_cast<double>(H) - 1) / 2, cx = (static_cast<double>(W) - 1) / 2;
  Tensor<float> out({C, H, W});
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      // Inverse map: rotate the output coordinate back by -degrees.
      const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
      const double sy = c * dy - s * dx + cy;
      const double sx = s * dy + c * dx + cx;
      for (std::size_t ch = 0; ch < C; ++ch) {
        const float* src = image.ptr() + ch * H * W;
        float v = fill[ch];
        if (interp == Interp::kNearest) {
          const long yi = std::lround(sy), xi = std::lround(sx);
          if (yi >= 0 && xi >= 0 && yi < static_cast<long>(H) && xi < static_cast<long>(W)) v = src[yi * W + xi];
        } else {
          const double fy = std::floor(sy), fx = std::floor(sx);
          const double ty = sy - fy, tx = sx - fx;
          auto at = [&](long y, long x) -> double {
            if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) return fill[ch];
            return src[y * static_cast<long>(W) + x];
          };
          const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
          if (sy > -1 && sx > -1 && sy < static_cast<double>(H) && sx < static_cast<double>(W)) {
            // Exact grid hits skip interpolation so r = 0 is the identity.
            if (ty == 0 && tx == 0) {
              v = static_cast<float>(at(y0, x0));
            } else {
              v = static_cast<float>((1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                                     ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1)));
            }
          }
        }
        out[(ch * H + i) * W + j] = v;
      }
    }
  }
  return out;
}

Tensor<float> cutout_at(const Tensor<float>& image, long top, long left, std::size_t side,
                        const std::vector<float>& fill) {
  check_image(image, &fill, "cutout");
  const long H = static_cast<long>(image.dim(1)), W = static_cast<long>(image.dim(2));
  Tensor<float> out = image;
  const long y0 = std::max(top, 0L), y1 = std::min(top + static_cast<long>(side), H);
  const long x0 = std::max(left, 0L), x1 = std::min(left + static_cast<long>(side), W);
  for (std::size_t ch = 0; ch < image.dim(0); ++ch) {
    for (long y = y0; y < y1; ++y) {
      for (long x = x0; x < x1; ++x) out[(ch * H + y) * W + x] = fill[ch];
    }
  }
  return out;
}

Tensor<float> cutout(const Tensor<float>& image, std::mt19937_64& rng, const std::vector<float>& fill) {
  check_image(image, &fill, "cutout");
  const std::size_t H = image.dim(1), W = image.dim(2);
  if (std::min(H, W) < 5) throw InvalidArgument("cutout: image side must be at least 5 pixels");
  std::uniform_real_distribution<double> factor(0.2, 0.5);
  const auto side = static_cast<std::size_t>(std::floor(factor(rng) * static_cast<double>(std::min(H, W))));
  std::uniform_int_distribution<long> cy(0, static_cast<long>(H) - 1), cx(0, static_cast<long>(W) - 1);
  const long y = cy(rng), x = cx(rng);
  const long half = static_cast<long>(side / 2);
  return cutout_at(image, y - half, x - half, side, fill);
}

Tensor<float> shuffle_tiles(const Tensor<float>& image, std::size_t n, const std::vector<std::size_t>& perm) {
  check_image(image, nullptr, "shuffle");
  if (n < 2 || n > 4) throw InvalidArgument("shuffle: grid size must be 2, 3 or 4, got " + std::to_string(n));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H < n || W < n) throw InvalidArgument("shuffle: image smaller than the tile grid");
  if (perm.size() != n * n) throw InvalidArgument("shuffle: permutation must have n*n entries");
  std::vector<bool> seen(n * n, false);
  for (std::size_t p : perm) {
    if (p >= n * n || seen[p]) throw InvalidArgument("shuffle: not a permutation");
    seen[p] = true;
  }
  // Tile t spans rows [ys[t/n], ys[t/n+1]) and cols [xs[t%n], xs[t%n+1]).
  std::vector<std::size_t> ys(n + 1), xs(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    ys[k] = k * (H / n);
    xs[k] = k * (W / n);
  }
  ys[n] = H;
  xs[n] = W;
  Tensor<float> out({C, H, W});
  for (std::size_t t = 0; t < n * n; ++t) {
    const std::size_t dr = t / n, dc = t % n, sr = perm[t] / n, sc = perm[t] % n;
    const std::size_t dh = ys[dr + 1] - ys[dr], dw = xs[dc + 1] - xs[dc];
    const std::size_t sh = ys[sr + 1] - ys[sr], sw = xs[sc + 1] - xs[sc];
    for (std::size_t ch = 0; ch < C; ++ch) {
      for (std::size_t y = 0; y < dh; ++y) {
        const std::size_t syy = ys[sr] + (sh == dh ? y : y * sh / dh);
        for (std::size_t x = 0; x < dw; ++x) {
          const std::size_t sxx = xs[sc] + (sw == dw ? x : x * sw / dw);
          out[(ch * H + ys[dr] + y) * W + xs[dc] + x] = image[(ch * H + syy) * W + sxx];
        }
      }
    }
  }
  return out;
}

Tensor<float> shuffle(const Tensor<float>& image, std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n * n);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  // Fisher-Yates with bounded modulo draws, portable across standard libraries.
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  return shuffle_tiles(image, n, perm);
}

Tensor<float> hflip(const Tensor<float>& image) {
  check_image(image, nullptr, "hflip");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  Tensor<float> out({C, H, W});
  for (std::size_t r = 0; r < C * H; ++r)
    for (std::size_t x = 0; x < W; ++x) out[r * W + x] = image[r * W + (W - 1 - x)];
  return out;
}

std::string transform_name(Transform t) {
  switch (t) {
    case Transform::kOriginal: return "original";
    case Transform::kRotate: return "rotate";
    case Transform::kCutout: return "cutout";
    case Transform::kShuffle2: return "shuffle2";
    case Transform::kShuffle3: return "shuffle3";
    case Transform::kShuffle4: return "shuffle4";
  }
  return "unknown";
}

ExpandedDataset expand_dataset(const Dataset& ds, std::uint64_t seed) {
  ds.validate();
  if (ds.size() == 0) throw InvalidArgument("expand_dataset: dataset is empty");
  const std::size_t n = ds.size();
  const std::size_t C = ds.channels(), H = ds.height(), W = ds.width();
  const ChannelStats stats = compute_stats(ds);
  const std::vector<float>& fill = stats.mean;
  constexpr Transform kOrder[] = {Transform::kOriginal, Transform::kRotate,   Transform::kCutout,
                                  Transform::kShuffle2, Transform::kShuffle3, Transform::kShuffle4};
  ExpandedDataset ex;
  ex.data.class_count = ds.class_count;
  ex.data.split = ds.split;
  ex.data.images = Tensor<float>({6 * n, C, H, W});
  ex.data.labels.resize(6 * n);
  ex.provenance.resize(6 * n);
  const std::size_t per = C * H * W;
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t rec = t * n + i;
      std::mt19937_64 rng(derive_seed(seed, rec));
      const auto src = ds.image(i);
      Tensor<float> img({C, H, W}, std::vector<float>(src.begin(), src.end()));
      switch (kOrder[t]) {
        case Transform::kOriginal: break;
        case Transform::kRotate: {
          std::uniform_real_distribution<double> r(0.0, 360.0);
          img = rotate(img, r(rng), fill);
          break;
        }
        case Transform::kCutout: img = cutout(img, rng, fill); break;
        case Transform::kShuffle2: img = shuffle(img, 2, rng); break;
        case Transform::kShuffle3: img = shuffle(img, 3, rng); break;
        case Transform::kShuffle4: img = shuffle(img, 4, rng); break;
      }
      std::copy(img.data().begin(), img.data().end(), ex.data.images.ptr() + rec * per);
      ex.data.labels[rec] = ds.labels[i];
      ex.provenance[rec] = {i, kOrder[t]};
    }
  }
  return ex;
}

void save_provenance(const ExpandedDataset& ex, std::uint64_t seed, const std::string& path) {
  nlohmann::json j;
  j["format"] = "resprune-expansion";
  j["seed"] = seed;
  j["records"] = ex.data.size();
  j["digest"] = ex.data.digest();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : ex.provenance) rows.push_back({p.source, transform_name(p.transform)});
  j["provenance"] = rows;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace resprune
