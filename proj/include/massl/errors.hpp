#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace massl {

enum class ErrorKind {
  NearZeroNorm,
  DimMismatch,
  NonPositiveTemperature,
  InvalidShape,
  BatchTooLarge,
  NotUnitNorm,
  IndivisibleBlockSize,
  IndexOutOfRange,
  EmptyViewSet,
  MismatchedBatch,
  StaleCache,
  ShapeMismatch,
  NonFiniteGrad,
  OutOfRangeStep,
  ParseError,
  EmptyFile,
  EmptyReferenceSet,
  DegenerateClustering,
  ConfigError,
  CheckpointVersionMismatch,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the ErrorKind tags so
/// callers (and the CLI's exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace massl
