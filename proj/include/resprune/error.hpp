// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <stdexcept>
#include <string>

namespace resprune {

enum class ErrorCode {
  kInvalidArgument = 1,
  kShape = 2,
  kIo = 3,
  kFormat = 4,
  kNumeric = 5,
  kInternal = 6,
};

/// Base class of every exception thrown by the library. The C API maps the
/// code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::kInvalidArgument, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::kShape, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCode::kFormat, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCode::kNumeric, what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(ErrorCode::kInternal, what) {}
};

#define RESPRUNE_CHECK(cond, ExcType, msg) \
  do {                                     \
    if (!(cond)) throw ExcType(msg);       \
  } while (0)

}  // namespace resprune
