#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpgt {

enum class ErrorCode {
  kInvalidArgument,
  kInsufficientObservations,
  kDegenerateGeometry,
  kDegenerateConfiguration,
  kNoConsensus,
  kBehindCamera,
  kOutOfModelDomain,
  kNonConvergence,
  kNonFinite,
  kRankDeficient,
  kUnobservable,
  kMissingImu,
  kSolverFailure,
  kParse,
  kIo,
};

/// Stable kebab-case name used as the machine-readable error prefix.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cpgt
