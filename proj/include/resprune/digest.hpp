// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace resprune {

/// Incremental 64-bit FNV-1a. Used for content digests in manifests and
/// plan files; not a cryptographic hash.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename T>
  void update_span(std::span<const T> v) {
    update(v.data(), v.size_bytes());
  }
  template <typename T>
  void update_value(const T& v) {
    update(&v, sizeof v);
  }

  std::uint64_t value() const { return state_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace resprune
