#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpgt/geometry.hpp"
#include "cpgt/rig.hpp"
#include "cpgt/solver.hpp"
#include "cpgt/triangulation.hpp"

namespace cpgt {

enum class CpDim { k2D = 2, k3D = 3 };

/// Surveyed control point. For 2D points z is unconstrained and only the
/// top-left 2x2 block of `covariance` is meaningful.
struct ControlPoint {
  std::string id;
  CpDim dim = CpDim::k3D;
  Vec3 position = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();

  bool is_3d() const { return dim == CpDim::k3D; }
  /// 2x2 (2D) or 3x3 (3D) measurement covariance.
  Eigen::MatrixXd measurement_covariance() const;
};

using ObservationMap = std::map<std::string, std::vector<Observation>>;
using TriangulationMap = std::map<std::string, TriangulatedCP>;

/// Closed-form least-squares similarity dst ~= T * src (Umeyama). With
/// `with_scale` false the scale is fixed to one. Throws
/// Error(kDegenerateConfiguration) for fewer than 3 points or collinear sources.
Similarity umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale = true);

struct PointPair {
  Vec3 local;
  Vec3 world;
};

/// Global minimizer of sum |P_W - T P_L|^2 over 3D pairs.
Similarity umeyama_init(std::span<const PointPair> pairs);

/// Yaw, horizontal translation and scale from the horizontal components;
/// vertical offset from the 3D pairs if any. Assumes gravity-aligned z in both frames.
Similarity horizontal_init(std::span<const PointPair> pairs, std::span<const PointPair> vertical_pairs);

struct InitialAlignment {
  Similarity transform;
  bool horizontal_fallback = false;
};

/// Umeyama on 3D control points, or the 4-DoF horizontal fit when fewer than
/// three non-collinear 3D points are triangulated.
InitialAlignment initial_alignment(const TriangulationMap& triangulations, std::span<const ControlPoint> cps);

struct AlignmentOptions {
  double reprojection_huber = 2.0;
  TimestampNs pose_tolerance_ns = 10'000'000;
  int max_scale_passes = 6;        ///< re-solves while the lever-arm scale settles
  double lever_tolerance_m = 1e-12;
  SolverOptions solver;
};

struct CpAlignmentRecord {
  std::string id;
  CpDim dim = CpDim::k3D;
  bool triangulated = false;
  bool used = false;                 ///< participated in the joint refinement
  Vec3 proxy = Vec3::Zero();         ///< refined local-frame proxy point
  double error_2d = std::numeric_limits<double>::infinity();
  std::optional<double> error_3d;    ///< absent for 2D control points
  Mat3 covariance_metric = Mat3::Zero();  ///< s^2 R Sigma_tri R^T
  double triangulation_uncertainty = 0.0;  ///< sqrt spectral norm of covariance_metric
  double measurement_uncertainty = 0.0;    ///< sqrt spectral norm of the CP covariance
};

struct SparseAlignment {
  Similarity world_from_local;
  std::vector<CpAlignmentRecord> records;  ///< in control-point order
  bool horizontal_fallback = false;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

/// Joint refinement of the similarity and per-CP proxy points over
/// reprojection factors (detection covariance) and world factors (survey
/// covariance; horizontal-only for 2D points). Camera lever arms enter the
/// local frame divided by the current scale, so the problem is re-solved
/// until that scale settles. Errors are measured on the original triangulations. Throws Error(kDegenerateConfiguration) with
/// fewer than three usable control points or none in 3D.
SparseAlignment joint_sparse_align(const TriangulationMap& triangulations, const ObservationMap& observations,
                                   const Trajectory& poses, const RigCalibration& rig,
                                   std::span<const ControlPoint> cps, const Similarity& init,
                                   const AlignmentOptions& options = {});

/// Convenience: initial_alignment followed by joint_sparse_align.
SparseAlignment sparse_align(const TriangulationMap& triangulations, const ObservationMap& observations,
                             const Trajectory& poses, const RigCalibration& rig, std::span<const ControlPoint> cps,
                             const AlignmentOptions& options = {});

enum class ErrorMode { k2D, k3D };

struct CpError {
  std::string id;
  double error = std::numeric_limits<double>::infinity();  ///< +inf when not triangulated
  bool excluded = false;  ///< 2D control point in 3D mode
};

std::vector<CpError> cp_alignment_errors(const Similarity& world_from_local, const TriangulationMap& triangulations,
                                         std::span<const ControlPoint> cps, ErrorMode mode);

/// s^2 R Sigma R^T.
Mat3 propagate_covariance(const Mat3& covariance, const Similarity& transform);

/// Square root of the largest eigenvalue of a symmetric PSD matrix.
double sqrt_spectral_norm(const Eigen::MatrixXd& covariance);

}  // namespace cpgt
