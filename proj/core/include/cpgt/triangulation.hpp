#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpgt/geometry.hpp"
#include "cpgt/rig.hpp"

namespace cpgt {

/// One pixel detection of a control point (or feature) in a frame.
struct Observation {
  TimestampNs image_id = 0;  ///< frame timestamp, resolved against the trajectory
  std::string camera_id;
  Vec2 pixel = Vec2::Zero();
  Mat2 covariance = Mat2::Identity();  ///< px^2
};

struct TriangulationOptions {
  double threshold_px = 4.0;
  int max_iterations = 500;
  std::uint64_t seed = 42;
  double min_ray_angle_deg = 0.5;
  TimestampNs pose_tolerance_ns = 10'000'000;
};

struct RansacResult {
  Vec3 point = Vec3::Zero();
  std::vector<std::size_t> inliers;  ///< indices into the observation list
};

struct TriangulatedCP {
  std::string cp_id;
  Vec3 position = Vec3::Zero();      ///< trajectory (local) frame
  Mat3 covariance = Mat3::Zero();    ///< local frame, m^2 (trajectory units^2)
  std::vector<std::size_t> inliers;
  double mean_reprojection_error_px = 0.0;
};

/// Camera pose (camera-to-frame) of an observation. Throws
/// Error(kInvalidArgument) if the frame has no pose.
RigidPose observation_camera_pose(const Observation& obs, const Trajectory& poses, const RigCalibration& rig,
                                  TimestampNs tolerance_ns);

/// Reprojection error in pixels, or +inf when the point cannot be projected.
double reprojection_error(const Vec3& point, const Observation& obs, const Trajectory& poses,
                          const RigCalibration& rig, TimestampNs tolerance_ns);

/// LO-RANSAC over two-view midpoint hypotheses; each new best model is
/// polished by Gauss-Newton on its inliers. Deterministic for a given seed.
RansacResult triangulate_ransac(std::span<const Observation> obs, const Trajectory& poses,
                                const RigCalibration& rig, const TriangulationOptions& options = {});

/// Minimizes the covariance-weighted reprojection error over the inliers.
TriangulatedCP refine_triangulation(const Vec3& initial, std::span<const Observation> obs,
                                    std::span<const std::size_t> inliers, const Trajectory& poses,
                                    const RigCalibration& rig, const TriangulationOptions& options = {});

/// Inverse Gauss-Newton Hessian at the refined position.
Mat3 triangulation_covariance(const TriangulatedCP& cp, std::span<const Observation> obs, const Trajectory& poses,
                              const RigCalibration& rig, const TriangulationOptions& options = {});

/// RANSAC, refinement and covariance in one call.
TriangulatedCP triangulate_control_point(const std::string& cp_id, std::span<const Observation> obs,
                                         const Trajectory& poses, const RigCalibration& rig,
                                         const TriangulationOptions& options = {});

/// Sum of squared whitened reprojection errors over the given observations.
double triangulation_cost(const Vec3& point, std::span<const Observation> obs,
                          std::span<const std::size_t> subset, const Trajectory& poses, const RigCalibration& rig,
                          TimestampNs tolerance_ns);

}  // namespace cpgt
