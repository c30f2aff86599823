#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "cpgt/geometry.hpp"

namespace cpgt {

struct ImuSample {
  TimestampNs timestamp_ns = 0;
  Vec3 gyro = Vec3::Zero();   ///< rad/s, IMU frame
  Vec3 accel = Vec3::Zero();  ///< specific force, m/s^2, IMU frame
};

/// Continuous-time noise densities of one IMU.
struct ImuNoise {
  double gyro_noise_density = 1.7e-4;   ///< rad/s/sqrt(Hz)
  double accel_noise_density = 2.0e-3;  ///< m/s^2/sqrt(Hz)
  double gyro_random_walk = 1.9e-5;     ///< rad/s^2/sqrt(Hz)
  double accel_random_walk = 3.0e-3;    ///< m/s^3/sqrt(Hz)

  void validate() const;
};

struct Bias {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();

  Eigen::Matrix<double, 6, 1> vector() const;
  static Bias from_vector(const Eigen::Matrix<double, 6, 1>& v);
};

inline Vec3 default_gravity() { return Vec3(0.0, 0.0, -9.81); }

using Mat9 = Eigen::Matrix<double, 9, 9>;

/// Relative motion between two IMU times, expressed in the IMU frame at the
/// start of the segment. Covariance order is (rotation, velocity, position).
struct PreintegratedSegment {
  Rotation delta_rotation;
  Vec3 delta_velocity = Vec3::Zero();
  Vec3 delta_position = Vec3::Zero();
  double delta_t = 0.0;
  Mat9 covariance = Mat9::Zero();

  Mat3 d_rotation_d_gyro_bias = Mat3::Zero();
  Mat3 d_velocity_d_gyro_bias = Mat3::Zero();
  Mat3 d_velocity_d_accel_bias = Mat3::Zero();
  Mat3 d_position_d_gyro_bias = Mat3::Zero();
  Mat3 d_position_d_accel_bias = Mat3::Zero();

  Bias linearization_bias;
  TimestampNs start_ns = 0;
  TimestampNs end_ns = 0;
  /// Set when a sample interval exceeded 5x the nominal period.
  bool gap_warning = false;
};

/// Midpoint preintegration over the full sample span [first, last].
/// Throws Error(kInvalidArgument) for fewer than two samples or non-increasing timestamps.
PreintegratedSegment preintegrate(std::span<const ImuSample> samples, const Bias& bias,
                                  const ImuNoise& noise);

/// Preintegrates the part of a stream between t_start and t_end, linearly
/// interpolating samples at the boundaries. Throws Error(kMissingImu) if the
/// stream does not cover the interval.
PreintegratedSegment preintegrate_between(std::span<const ImuSample> stream, TimestampNs t_start,
                                          TimestampNs t_end, const Bias& bias, const ImuNoise& noise);

struct CorrectedDeltas {
  Rotation delta_rotation;
  Vec3 delta_velocity = Vec3::Zero();
  Vec3 delta_position = Vec3::Zero();
  /// Bias change exceeded the first-order validity threshold (0.1).
  bool large_correction_warning = false;
};

/// First-order bias update of the deltas using the stored Jacobians.
CorrectedDeltas bias_correct(const PreintegratedSegment& segment, const Bias& new_bias);

struct NavState {
  RigidPose pose;  ///< IMU body pose in the world frame
  Vec3 velocity = Vec3::Zero();
};

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Jacobians of the 9-vector preintegration residual with respect to the
/// tangent spaces of the states. Pose tangents are (rotation, translation)
/// with right-multiplied rotation increments and world-frame translation.
struct ImuResidualJacobians {
  Eigen::Matrix<double, 9, 6> pose_i;
  Eigen::Matrix<double, 9, 3> velocity_i;
  Eigen::Matrix<double, 9, 6> bias_i;
  Eigen::Matrix<double, 9, 6> pose_j;
  Eigen::Matrix<double, 9, 3> velocity_j;
};

/// Residual (rotation log-error, velocity, position) of the segment against two states.
Vec9 imu_residual(const PreintegratedSegment& segment, const NavState& state_i, const NavState& state_j,
                  const Bias& bias_i, const Vec3& gravity, ImuResidualJacobians* jacobians = nullptr);

/// Bias random-walk residual bias_j - bias_i (gyro, accel).
Vec6 bias_walk_residual(const Bias& bias_i, const Bias& bias_j);
/// Covariance of the bias random-walk over dt seconds.
Eigen::Matrix<double, 6, 6> bias_walk_covariance(const ImuNoise& noise, double dt);

}  // namespace cpgt
