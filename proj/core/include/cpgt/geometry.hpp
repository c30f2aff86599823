#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cpgt {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Skew-symmetric matrix such that hat(a) * b == a.cross(b).
Mat3 hat(const Vec3& v);

/// SO(3) exponential of a rotation vector (axis * angle).
Mat3 so3_exp(const Vec3& omega);
/// Inverse of so3_exp; the returned angle lies in [0, pi].
Vec3 so3_log(const Mat3& rotation);
/// Right Jacobian Jr(w): Exp(w + dw) ~= Exp(w) Exp(Jr(w) dw).
Mat3 so3_right_jacobian(const Vec3& omega);
Mat3 so3_right_jacobian_inverse(const Vec3& omega);

/// Unit quaternion rotation. Renormalized after every composition.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q);
  static Rotation identity() { return Rotation(); }
  static Rotation from_wxyz(double w, double x, double y, double z);
  static Rotation from_matrix(const Mat3& m);
  static Rotation exp(const Vec3& omega);
  static Rotation about_axis(const Vec3& axis, double angle_rad);

  Vec3 log() const;
  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }
  /// Same rotation with w >= 0 (the representation written to files).
  Eigen::Quaterniond canonical_quaternion() const;

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  /// Geodesic distance in radians.
  double angle_to(const Rotation& other) const;

 private:
  Eigen::Quaterniond q_;
};

/// Rigid transform x -> R x + t.
class RigidPose {
 public:
  RigidPose() : translation_(Vec3::Zero()) {}
  RigidPose(const Rotation& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}
  static RigidPose identity() { return RigidPose(); }

  const Rotation& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  RigidPose inverse() const;
  RigidPose operator*(const RigidPose& other) const;
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  Eigen::Matrix4d matrix() const;

 private:
  Rotation rotation_;
  Vec3 translation_;
};

/// Sim(3) element x -> s R x + t with s > 0.
class Similarity {
 public:
  Similarity() : scale_(1.0), translation_(Vec3::Zero()) {}
  /// Throws Error(kInvalidArgument) when scale is not strictly positive.
  Similarity(double scale, const Rotation& rotation, const Vec3& translation);
  explicit Similarity(const RigidPose& pose)
      : scale_(1.0), rotation_(pose.rotation()), translation_(pose.translation()) {}
  static Similarity identity() { return Similarity(); }

  double scale() const { return scale_; }
  const Rotation& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return scale_ * (rotation_ * p) + translation_; }
  Vec3 operator*(const Vec3& p) const { return apply(p); }
  Similarity operator*(const Similarity& other) const;
  Similarity inverse() const;

  /// Maps a device pose expressed in the source frame into the target frame.
  /// Rotation is composed, translation is transformed as a point.
  RigidPose transform_pose(const RigidPose& pose) const;

 private:
  double scale_;
  Rotation rotation_;
  Vec3 translation_;
};

inline Vec3 sim3_apply(const Similarity& t, const Vec3& p) { return t.apply(p); }
inline Similarity sim3_compose(const Similarity& a, const Similarity& b) { return a * b; }
inline Similarity sim3_inverse(const Similarity& t) { return t.inverse(); }

/// Largest absolute point-action discrepancy between two similarities over a point set.
double max_point_discrepancy(const Similarity& a, const Similarity& b, std::span<const Vec3> points);

using TimestampNs = std::int64_t;

struct StampedPose {
  TimestampNs timestamp_ns = 0;
  RigidPose pose;  ///< device-to-frame transform (device pose in the trajectory frame)
};

/// Time-ordered device poses. Timestamps are strictly increasing.
class Trajectory {
 public:
  Trajectory() = default;
  /// Throws Error(kInvalidArgument) if timestamps are not strictly increasing.
  explicit Trajectory(std::vector<StampedPose> poses);

  const std::vector<StampedPose>& poses() const { return poses_; }
  std::size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }
  const StampedPose& operator[](std::size_t i) const { return poses_[i]; }

  /// Pose nearest to `t` within `tolerance_ns`, if any.
  std::optional<RigidPose> lookup(TimestampNs t, TimestampNs tolerance_ns) const;
  std::optional<std::size_t> nearest_index(TimestampNs t, TimestampNs tolerance_ns) const;

  /// last - first timestamp, zero for fewer than two poses.
  TimestampNs span_ns() const;

  Trajectory transformed(const Similarity& t) const;

 private:
  std::vector<StampedPose> poses_;
};

}  // namespace cpgt
