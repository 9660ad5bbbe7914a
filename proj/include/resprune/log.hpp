// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <memory>

#include <spdlog/logger.h>

namespace resprune {

// Shared stderr logger. Level comes from RESPRUNE_LOG (trace..off), default
// "warn".
std::shared_ptr<spdlog::logger> logger();

}  // namespace resprune
