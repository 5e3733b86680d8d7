#include "massl/errors.hpp"

namespace massl {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NearZeroNorm: return "NearZeroNorm";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::BatchTooLarge: return "BatchTooLarge";
    case ErrorKind::NotUnitNorm: return "NotUnitNorm";
    case ErrorKind::IndivisibleBlockSize: return "IndivisibleBlockSize";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyViewSet: return "EmptyViewSet";
    case ErrorKind::MismatchedBatch: return "MismatchedBatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteGrad: return "NonFiniteGrad";
    case ErrorKind::OutOfRangeStep: return "OutOfRangeStep";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::EmptyReferenceSet: return "EmptyReferenceSet";
    case ErrorKind::DegenerateClustering: return "DegenerateClustering";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace massl
