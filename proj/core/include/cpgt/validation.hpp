#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpgt/alignment.hpp"

namespace cpgt {

enum class LoocvStatus { kOk, kNotTriangulated, kDegenerate };
std::string_view to_string(LoocvStatus s);

struct LoocvRecord {
  std::string cp_id;
  CpDim dim = CpDim::k3D;
  LoocvStatus status = LoocvStatus::kOk;
  std::string message;            ///< reason when status is not ok
  double error_2d = 0.0;          ///< m
  double uncertainty_2d = 0.0;    ///< sqrt spectral norm of the 2x2 horizontal block
  double ratio_2d = 0.0;
  std::optional<double> error_3d; ///< 3D control points only
  std::optional<double> uncertainty_3d;
  std::optional<double> ratio_3d;
};

/// Holds out each control point in turn, re-runs the joint alignment on the
/// rest and compares the held-out error with sqrt||s^2 R Sigma_tri R^T + Sigma_cp||.
/// Throws Error(kInsufficientObservations) with fewer than four control points.
std::vector<LoocvRecord> loocv(const TriangulationMap& triangulations, const ObservationMap& observations,
                               const Trajectory& poses, const RigCalibration& rig, std::span<const ControlPoint> cps,
                               const AlignmentOptions& options = {});

struct Histogram {
  std::vector<double> edges;  ///< bins + 1 values
  std::vector<std::size_t> counts;
};

struct ResidualStats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;        ///< Bessel-corrected
  double max_abs = 0.0;
  double ks_distance = 0.0;  ///< sup |F_n - Phi|
  Histogram histogram;
};

/// Summary of whitened residual samples against the unit normal. Throws
/// Error(kInsufficientObservations) for fewer than 30 samples.
ResidualStats residual_stats(std::span<const double> samples, int bins = 60, double range = 6.0);

}  // namespace cpgt
