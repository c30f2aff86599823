#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cpgt/alignment.hpp"
#include "cpgt/inertial.hpp"
#include "cpgt/rig.hpp"
#include "cpgt/solver.hpp"
#include "cpgt/synth.hpp"

namespace cpgt {

enum class FusionMode { kFull, kInertialOnly };
std::string_view to_string(FusionMode mode);
FusionMode fusion_mode_from_string(std::string_view name);

struct FusionConfig {
  int rounds = 3;                    ///< variance-factor reweighting rounds
  double min_variance_factor = 1e-2; ///< per-round clamp; noise-free data would drive the factor to 0
  double max_variance_factor = 1e2;
  double cp_deflation = 0.25;        ///< multiplier on CP survey covariances
  double reprojection_huber = 2.0;   ///< whitened units; applied to both visual groups
  int keyframe_stride = 5;
  FusionMode mode = FusionMode::kFull;
  bool use_control_points = true;    ///< false drops the marker and cp-world families
  Vec3 gravity = default_gravity();
  Bias initial_bias;
  double init_threshold_px = 30.0;   ///< RANSAC threshold for initial landmark triangulation
  double bias_prior_gyro = 0.1;      ///< rad/s, first keyframe only
  double bias_prior_accel = 1.0;     ///< m/s^2, first keyframe only
  double height_prior_sigma = 1.0;   ///< m, only without 3D control points
  double pose_prior_sigma = 1e-3;    ///< rad and m, only without usable control points
  TimestampNs pose_tolerance_ns = 10'000'000;
  SolverOptions solver;
};

struct FusionInput {
  Trajectory initial;                    ///< device poses, world frame
  std::vector<FeatureTrack> tracks;
  ObservationMap cp_detections;
  std::vector<ControlPoint> control_points;
  std::vector<ImuSample> imu;
  RigCalibration rig;
};

struct KeyframeBlocks {
  TimestampNs timestamp_ns = 0;
  BlockId pose;      ///< world-from-IMU
  BlockId velocity;  ///< world frame
  BlockId bias;      ///< (gyro, accel)
};

struct FusionProblem {
  Problem problem;
  FusionConfig config;
  RigidPose imu_from_device;
  std::vector<KeyframeBlocks> keyframes;
  std::map<std::string, BlockId> cp_proxies;
  std::vector<BlockId> landmarks;
  std::vector<std::string> dropped_tracks;  ///< tracks that could not be initialized
  bool height_prior = false;
  bool pose_prior = false;
};

/// Assembles the keyframe states and the four factor families. Throws
/// Error(kInvalidArgument) without keyframes and Error(kMissingImu) listing
/// every keyframe interval not covered by the IMU stream.
FusionProblem build_fusion_problem(const FusionInput& input, const FusionConfig& config = {});

struct PseudoGT {
  Trajectory trajectory;              ///< keyframe device poses, world frame
  std::vector<Vec3> velocities;       ///< IMU velocity, world frame
  std::vector<Bias> biases;
  std::vector<Mat6> pose_covariances; ///< device pose tangent (rotation, translation)
  double median_position_uncertainty = 0.0;  ///< median sqrt spectral norm of position blocks, m
  /// Factor applied per round to each group's covariance (1 when not reweighted).
  std::vector<std::array<double, kNumResidualGroups>> variance_factor_history;
  std::array<double, kNumResidualGroups> cumulative_variance_factor{};
  std::array<Eigen::VectorXd, kNumResidualGroups> whitened;
  SolveReport report;
};

/// Reweighting loop over the visual groups followed by a final solve, pose
/// covariance extraction and residual export. Solver errors are rethrown
/// with the round index.
PseudoGT optimize_pseudo_gt(FusionProblem& fp);

/// build_fusion_problem followed by optimize_pseudo_gt.
PseudoGT fuse(const FusionInput& input, const FusionConfig& config = {});

/// Feature factors dropped. Throws Error(kUnobservable) without CP detections.
PseudoGT inertial_only_optimize(const FusionInput& input, FusionConfig config = {});

/// Per-keyframe 6x6 device pose covariances of a solved problem.
std::vector<Mat6> pose_covariances(const FusionProblem& fp);

/// Median of sqrt spectral norm of the position blocks.
double median_position_uncertainty(std::span<const Mat6> covariances);

/// Whitened residuals per family: visual (feature and marker pooled) and IMU.
struct FamilyResiduals {
  Eigen::VectorXd visual;
  Eigen::VectorXd imu;
};
FamilyResiduals whitened_residuals(const SolveReport& report);

}  // namespace cpgt
