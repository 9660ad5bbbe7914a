// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstddef>

namespace resprune {

/// Linear warmup over the first `warmup_steps`, then cosine decay that
/// reaches exactly zero at `total_steps`.
class WarmupCosine {
 public:
  WarmupCosine(double base_lr, std::size_t total_steps, std::size_t warmup_steps = 0);
  double at(std::size_t step) const;
  double base() const { return base_; }
  std::size_t total() const { return total_; }

 private:
  double base_;
  std::size_t total_;
  std::size_t warmup_;
};

}  // namespace resprune
