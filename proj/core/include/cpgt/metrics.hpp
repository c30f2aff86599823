#pragma once

#include <array>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cpgt/geometry.hpp"

namespace cpgt {

/// Piecewise-linear score anchors (error in meters, score).
inline constexpr std::array<std::pair<double, double>, 7> kScoreAnchors{{
    {0.05, 100.0}, {0.20, 90.0}, {0.50, 75.0}, {1.0, 60.0}, {2.0, 40.0}, {5.0, 20.0}, {10.0, 0.0}}};

/// Score in [0, 100]. Infinity scores 0. Throws Error(kInvalidArgument) for
/// negative or NaN errors.
double score(double error_m);

/// Mean score over every control point; missing points carry +inf.
double sequence_score(std::span<const double> errors);

/// Percentage of errors at or below `threshold_m`.
double cp_recall(std::span<const double> errors, double threshold_m = 1.0);

/// Percentage of reference poses with a horizontal position error at or
/// below `threshold_m`. Reference poses without an estimate within
/// `assoc_tol_ns` count as misses.
double pose_recall(const Trajectory& estimate, const Trajectory& reference, double threshold_m = 5.0,
                   TimestampNs assoc_tol_ns = 10'000'000);

enum class AteAlignment { kSim3, kSe3, kNone };
std::string_view to_string(AteAlignment a);
AteAlignment ate_alignment_from_string(std::string_view name);

struct AteResult {
  double rmse = 0.0;
  std::size_t pairs = 0;
  Similarity gt_from_estimate;
};

/// RMSE of 3D positions after associating by timestamp and aligning the
/// estimate onto the reference. Throws Error(kInsufficientObservations) with
/// fewer than three associated pairs.
AteResult ate(const Trajectory& estimate, const Trajectory& reference, AteAlignment alignment = AteAlignment::kSim3,
              TimestampNs assoc_tol_ns = 10'000'000);
double ate_rmse(const Trajectory& estimate, const Trajectory& reference,
                AteAlignment alignment = AteAlignment::kSim3, TimestampNs assoc_tol_ns = 10'000'000);

/// 100 |s - 1|, percent.
double scale_error(const Similarity& t);
/// Angle between R z and z, degrees.
double gravity_error(const Similarity& t);

/// False when the trajectory is empty or spans less than half the sequence.
bool coverage_check(const Trajectory& trajectory, TimestampNs sequence_duration_ns);

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t sequences = 0;
  std::size_t runs = 0;
  bool single_sequence = false;  ///< n = 1: the (n - 1) factor is dropped
};

/// Mean of per-sequence run means and the standard deviation of that mean:
/// sqrt(sum_ij (x_ij - xbar_i)^2 / (k (k-1) n (n-1))), with n (n-1) replaced
/// by 1 for a single sequence. Every sequence must carry the same k >= 2 runs.
GroupStats group_stats(std::span<const std::vector<double>> runs_per_sequence);

}  // namespace cpgt
