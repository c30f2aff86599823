#pragma once

#include <memory>

#include "cpgt/camera.hpp"
#include "cpgt/geometry.hpp"
#include "cpgt/inertial.hpp"
#include "cpgt/solver.hpp"

namespace cpgt {

/// Reprojection of a free 3D point into a camera whose pose is fixed.
/// Parameters: [point(3)]. `camera_from_frame` maps frame points to camera points.
class FixedPoseReprojectionCost final : public CostFunction {
 public:
  FixedPoseReprojectionCost(CameraModel camera, RigidPose camera_from_frame, Vec2 measured)
      : camera_(std::move(camera)), camera_from_frame_(camera_from_frame), measured_(measured) {}
  int residual_dim() const override { return 2; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;

 private:
  CameraModel camera_;
  RigidPose camera_from_frame_;
  Vec2 measured_;
};

/// Reprojection through a free device pose (device-to-world) and free point.
/// Parameters: [device pose (rigid-pose), point(3)].
class PoseReprojectionCost final : public CostFunction {
 public:
  PoseReprojectionCost(CameraModel camera, RigidPose camera_from_body, Vec2 measured)
      : camera_(std::move(camera)), camera_from_body_(camera_from_body), measured_(measured) {}
  int residual_dim() const override { return 2; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;

 private:
  CameraModel camera_;
  RigidPose camera_from_body_;
  Vec2 measured_;
};

/// measured_world - T * point, full 3D or horizontal (x, y) only.
/// Parameters: [similarity, point(3)].
class SimilarityPointCost final : public CostFunction {
 public:
  SimilarityPointCost(Vec3 measured_world, bool horizontal_only)
      : measured_(measured_world), horizontal_(horizontal_only) {}
  int residual_dim() const override { return horizontal_ ? 2 : 3; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;

 private:
  Vec3 measured_;
  bool horizontal_;
};

/// measured_world - point, full 3D or horizontal only. Parameters: [point(3)].
class WorldPointCost final : public CostFunction {
 public:
  WorldPointCost(Vec3 measured_world, bool horizontal_only)
      : measured_(measured_world), horizontal_(horizontal_only) {}
  int residual_dim() const override { return horizontal_ ? 2 : 3; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;

 private:
  Vec3 measured_;
  bool horizontal_;
};

/// Preintegrated IMU constraint.
/// Parameters: [pose_i, velocity_i(3), bias_i(6), pose_j, velocity_j(3)].
class ImuPreintegrationCost final : public CostFunction {
 public:
  ImuPreintegrationCost(std::shared_ptr<const PreintegratedSegment> segment, Vec3 gravity)
      : segment_(std::move(segment)), gravity_(gravity) {}
  int residual_dim() const override { return 9; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;
  const PreintegratedSegment& segment() const { return *segment_; }

 private:
  std::shared_ptr<const PreintegratedSegment> segment_;
  Vec3 gravity_;
};

/// bias_j - bias_i. Parameters: [bias_i(6), bias_j(6)].
class BiasWalkCost final : public CostFunction {
 public:
  int residual_dim() const override { return 6; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;
};

/// (Log(R0^T R), t - t0) on a rigid pose. Parameters: [pose].
class PosePriorCost final : public CostFunction {
 public:
  explicit PosePriorCost(RigidPose prior) : prior_(prior) {}
  int residual_dim() const override { return 6; }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;

 private:
  RigidPose prior_;
};

/// Selected components of a euclidean (or pose translation) block minus a target.
/// Parameters: [block]. `offset` indexes the ambient vector; `tangent_offset`
/// the matching tangent coordinate.
class ComponentPriorCost final : public CostFunction {
 public:
  ComponentPriorCost(Eigen::VectorXd target, int ambient_offset, int tangent_offset, int tangent_size)
      : target_(std::move(target)), offset_(ambient_offset), tangent_offset_(tangent_offset),
        tangent_size_(tangent_size) {}
  int residual_dim() const override { return static_cast<int>(target_.size()); }
  bool evaluate(const double* const* params, double* residuals, double** jacobians) const override;

 private:
  Eigen::VectorXd target_;
  int offset_;
  int tangent_offset_;
  int tangent_size_;
};

}  // namespace cpgt
