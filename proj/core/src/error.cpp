// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/error.hpp"

namespace splatseg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::InvalidParameter: return "invalid_parameter";
  case ErrorKind::Contract: return "contract";
  case ErrorKind::NumericFault: return "numeric_fault";
  case ErrorKind::Config: return "config";
  case ErrorKind::Io: return "io";
  case ErrorKind::MissingFile: return "missing_file";
  case ErrorKind::VersionMismatch: return "version_mismatch";
  case ErrorKind::DimensionMismatch: return "dimension_mismatch";
  case ErrorKind::Parse: return "parse";
  case ErrorKind::DegenerateScene: return "degenerate_scene";
  case ErrorKind::DegeneratePlan: return "degenerate_plan";
  }
  return "unknown";
}

} // namespace splatseg
