#include "cpgt/error.hpp"

namespace cpgt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInsufficientObservations: return "insufficient-observations";
    case ErrorCode::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kNoConsensus: return "no-consensus";
    case ErrorCode::kBehindCamera: return "behind-camera";
    case ErrorCode::kOutOfModelDomain: return "out-of-model-domain";
    case ErrorCode::kNonConvergence: return "non-convergence";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kRankDeficient: return "rank-deficient";
    case ErrorCode::kUnobservable: return "unobservable";
    case ErrorCode::kMissingImu: return "missing-imu";
    case ErrorCode::kSolverFailure: return "solver-failure";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace cpgt
