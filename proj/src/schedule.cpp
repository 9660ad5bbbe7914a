// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/schedule.hpp"

#include <cmath>
#include <numbers>

#include "resprune/error.hpp"

namespace resprune {

WarmupCosine::WarmupCosine(double base_lr, std::size_t total_steps, std::size_t warmup_steps)
    : base_(base_lr), total_(total_steps), warmup_(warmup_steps) {
  if (!(base_lr >= 0) || !std::isfinite(base_lr)) throw InvalidArgument("schedule: learning rate must be >= 0");
  if (warmup_steps > total_steps) throw InvalidArgument("schedule: warmup longer than the whole run");
}

double WarmupCosine::at(std::size_t step) const {
  if (step >= total_) return 0.0;
  if (step < warmup_) return base_ * static_cast<double>(step + 1) / static_cast<double>(warmup_);
  const double t = static_cast<double>(step - warmup_) / static_cast<double>(total_ - warmup_);
  return base_ * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace resprune
