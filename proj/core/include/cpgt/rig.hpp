#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cpgt/camera.hpp"
#include "cpgt/geometry.hpp"
#include "cpgt/inertial.hpp"

namespace cpgt {

struct RigCamera {
  std::string id;
  CameraModel model;
  RigidPose camera_from_device;
};

struct RigCalibration {
  std::vector<RigCamera> cameras;
  RigidPose imu_from_device;
  ImuNoise imu_noise;

  /// Throws Error(kInvalidArgument) for duplicate ids or invalid intrinsics.
  void validate() const;
  /// Throws Error(kInvalidArgument) naming the unknown id.
  const RigCamera& camera(std::string_view id) const;
  bool has_camera(std::string_view id) const;
};

}  // namespace cpgt
