#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpgt/geometry.hpp"

namespace cpgt {

enum class CameraKind { kPinhole, kPinholeRadtan4, kKannalaBrandt4 };

std::string_view to_string(CameraKind kind);
/// Accepts "pinhole", "pinhole-radtan4", "kannala-brandt4".
CameraKind camera_kind_from_string(std::string_view name);

/// Intrinsics. `distortion` holds k1 k2 p1 p2 (radtan4) or k1..k4 (kannala-brandt4);
/// unused entries are zero for pinhole.
struct CameraModel {
  CameraKind kind = CameraKind::kPinhole;
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 4> distortion{0.0, 0.0, 0.0, 0.0};
  int width = 0;
  int height = 0;

  static CameraModel pinhole(double fx, double fy, double cx, double cy, int width, int height);

  /// Throws Error(kInvalidArgument) for non-positive focal lengths or image size.
  void validate() const;
  bool in_image(const Vec2& px) const;
  /// Pinhole-like models cannot see points with z <= 0.
  bool has_cheirality() const { return kind != CameraKind::kKannalaBrandt4; }
};

using ProjectionJacobian = Eigen::Matrix<double, 2, 3>;

/// Projects a camera-frame point. Returns nullopt when the point is behind a
/// pinhole-kind camera or outside the distortion model's monotonic domain.
/// `jacobian`, when given, receives d(pixel)/d(p_cam).
std::optional<Vec2> try_project(const CameraModel& cam, const Vec3& p_cam,
                                ProjectionJacobian* jacobian = nullptr);

/// Checked projection; throws kBehindCamera or kOutOfModelDomain.
Vec2 project(const CameraModel& cam, const Vec3& p_cam);

/// Unit bearing for a pixel. Distortion is inverted by Newton-form fixed-point
/// iteration (20 iterations, 1e-8 in normalized coordinates); throws
/// kNonConvergence on failure and kInvalidArgument outside the image.
Vec3 unproject(const CameraModel& cam, const Vec2& px);

/// Remaps pixels observed with `src` into the pinhole camera `dst` sharing the
/// same optical center. Entries are nullopt when the ray leaves dst's frustum.
std::vector<std::optional<Vec2>> undistort_points(const CameraModel& src, const CameraModel& dst,
                                                  std::span<const Vec2> points);

}  // namespace cpgt
