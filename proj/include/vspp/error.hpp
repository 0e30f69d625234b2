// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vspp {

enum class Errc {
  InvalidParams,
  OutOfRange,
  Infeasible,
  InvalidSpec,
  EmptyDirectory,
  UnreadableFrame,
  TooSmall,
  TooShort,
  ShapeMismatch,
  DegenerateVector,
  DimMismatch,
  NotNormalized,
  EmptyBank,
  LengthMismatch,
  LabelOutOfRange,
  ConfigMismatch,
  CorruptCheckpoint,
  SchemaMismatch,
  NonDeterministicLoss,
  Usage,
  Io,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the `Errc` kinds so
/// callers (and tests) can branch on the category instead of the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace vspp
