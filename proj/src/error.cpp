// SPDX-License-Identifier: Apache-2.0
#include "vspp/error.hpp"

namespace vspp {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::Infeasible: return "Infeasible";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::EmptyDirectory: return "EmptyDirectory";
    case Errc::UnreadableFrame: return "UnreadableFrame";
    case Errc::TooSmall: return "TooSmall";
    case Errc::TooShort: return "TooShort";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DegenerateVector: return "DegenerateVector";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::EmptyBank: return "EmptyBank";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::NonDeterministicLoss: return "NonDeterministicLoss";
    case Errc::Usage: return "Usage";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace vspp
