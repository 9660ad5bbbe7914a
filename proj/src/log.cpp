// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace resprune {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto log = std::make_shared<spdlog::logger>("resprune", sink);
    log->set_pattern("[%l] %v");
    const char* env = std::getenv("RESPRUNE_LOG");
    log->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return log;
  }();
  return instance;
}

}  // namespace resprune
