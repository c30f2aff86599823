#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cpgt/alignment.hpp"
#include "cpgt/metrics.hpp"
#include "cpgt/triangulation.hpp"
#include "cpgt/validation.hpp"

namespace cpgt {

struct EvaluateOptions {
  TriangulationOptions triangulation;
  AlignmentOptions alignment;
  ErrorMode mode = ErrorMode::k2D;
  double cp_threshold_m = 1.0;
  double pose_threshold_m = 5.0;
  /// Sequence duration for the coverage rule; defaults to the detection span.
  std::optional<TimestampNs> duration_ns;
};

struct CpEvaluation {
  std::string id;
  CpDim dim = CpDim::k3D;
  std::size_t observations = 0;  ///< detections with a trajectory pose
  std::size_t inliers = 0;
  bool triangulated = false;
  std::string failure;           ///< why triangulation failed
  double error = 0.0;            ///< in the evaluation mode, +inf when missing
  bool excluded = false;         ///< 2D control point in 3D mode
  double error_2d = 0.0;
  std::optional<double> error_3d;
  double triangulation_uncertainty = 0.0;
  double measurement_uncertainty = 0.0;
};

struct EvaluationReport {
  bool valid = true;             ///< coverage rule
  TimestampNs duration_ns = 0;
  TimestampNs span_ns = 0;
  bool horizontal_fallback = false;
  Similarity world_from_local;
  double score = 0.0;
  double cp_recall = 0.0;
  std::optional<double> pose_recall;
  double scale_error = 0.0;      ///< percent; NaN when invalid
  double gravity_error = 0.0;    ///< degrees; NaN when invalid
  std::vector<CpEvaluation> cps;
};

/// Observations whose frame has a pose within `tolerance_ns`.
ObservationMap observations_with_poses(const ObservationMap& detections, const Trajectory& poses,
                                       TimestampNs tolerance_ns);

/// Triangulates every control point with at least two posed detections.
/// Failures are reported through `failures` (id, reason) rather than thrown.
TriangulationMap triangulate_all(const ObservationMap& posed, const Trajectory& poses, const RigCalibration& rig,
                                 std::span<const ControlPoint> cps, const TriangulationOptions& options,
                                 std::vector<std::pair<std::string, std::string>>* failures = nullptr);

/// Coverage check, triangulation, joint alignment, errors and metrics. A
/// trajectory failing the coverage rule scores 0 with every CP missed.
/// Throws Error(kDegenerateConfiguration) when alignment is impossible.
EvaluationReport evaluate(const Trajectory& trajectory, const ObservationMap& detections,
                          std::span<const ControlPoint> cps, const RigCalibration& rig,
                          const EvaluateOptions& options = {}, const Trajectory* reference = nullptr);

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

/// Machine-readable report: config echo as `# key=value`, a summary row and one row per CP.
std::string format_evaluation_csv(const EvaluationReport& report, const ConfigEcho& config);
/// Short human-readable summary.
std::string format_evaluation_summary(const EvaluationReport& report);
std::string format_loocv_csv(std::span<const LoocvRecord> records, const ConfigEcho& config);
std::string format_residual_stats_csv(const std::string& family, const ResidualStats& stats);

/// Fixed-precision number formatting shared by every report ("inf", "nan" spelled out).
std::string format_number(double v, int precision = 6);

}  // namespace cpgt
