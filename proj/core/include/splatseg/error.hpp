// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace splatseg {

enum class ErrorKind {
  InvalidParameter,
  Contract,
  NumericFault,
  Config,
  Io,
  MissingFile,
  VersionMismatch,
  DimensionMismatch,
  Parse,
  DegenerateScene,
  DegeneratePlan,
};

/// Stable lowercase name used in machine-parsable error lines.
std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string &message) {
  if (!condition) {
    throw Error(kind, message);
  }
}

} // namespace splatseg
