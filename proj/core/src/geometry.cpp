#include "cpgt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpgt/error.hpp"

namespace cpgt {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  return Mat3::Identity() + std::sin(theta) / theta * w +
         (1.0 - std::cos(theta)) / (theta * theta) * w * w;
}

Vec3 so3_log(const Mat3& rotation) {
  // Quaternion route is stable near both 0 and pi.
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) {
    return 2.0 * v / q.w();
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return angle / s * v;
}

Mat3 so3_right_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < 1e-5) {
    return Mat3::Identity() - 0.5 * w + w * w / 6.0;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

Mat3 so3_right_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  if (theta < 1e-5) {
    return Mat3::Identity() + 0.5 * w + w * w / 12.0;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() + 0.5 * w +
         (1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta))) * w * w;
}

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q) {
  const double n = q_.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidArgument, "rotation quaternion has zero or non-finite norm");
  }
  q_.coeffs() /= n;
}

Rotation Rotation::from_wxyz(double w, double x, double y, double z) {
  return Rotation(Eigen::Quaterniond(w, x, y, z));
}

Rotation Rotation::from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

Rotation Rotation::exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < kSmallAngle) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return Rotation(q);
  }
  const Vec3 axis = omega / theta;
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(theta, axis)));
}

Rotation Rotation::about_axis(const Vec3& axis, double angle_rad) {
  return exp(axis.normalized() * angle_rad);
}

Vec3 Rotation::log() const {
  Eigen::Quaterniond q = canonical_quaternion();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < kSmallAngle) return 2.0 * v / q.w();
  return 2.0 * std::atan2(s, q.w()) / s * v;
}

Eigen::Quaterniond Rotation::canonical_quaternion() const {
  Eigen::Quaterniond q = q_;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Rotation Rotation::operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

double Rotation::angle_to(const Rotation& other) const {
  return (inverse() * other).log().norm();
}

RigidPose RigidPose::inverse() const {
  const Rotation inv = rotation_.inverse();
  return RigidPose(inv, -(inv * translation_));
}

RigidPose RigidPose::operator*(const RigidPose& other) const {
  return RigidPose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
}

Eigen::Matrix4d RigidPose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_.matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Similarity::Similarity(double scale, const Rotation& rotation, const Vec3& translation)
    : scale_(scale), rotation_(rotation), translation_(translation) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kInvalidArgument,
                "similarity scale must be positive, got " + std::to_string(scale));
  }
}

Similarity Similarity::operator*(const Similarity& other) const {
  return Similarity(scale_ * other.scale_, rotation_ * other.rotation_,
                    scale_ * (rotation_ * other.translation_) + translation_);
}

Similarity Similarity::inverse() const {
  const Rotation inv = rotation_.inverse();
  const double s = 1.0 / scale_;
  return Similarity(s, inv, -s * (inv * translation_));
}

RigidPose Similarity::transform_pose(const RigidPose& pose) const {
  return RigidPose(rotation_ * pose.rotation(), apply(pose.translation()));
}

double max_point_discrepancy(const Similarity& a, const Similarity& b, std::span<const Vec3> points) {
  double worst = 0.0;
  for (const Vec3& p : points) worst = std::max(worst, (a.apply(p) - b.apply(p)).norm());
  return worst;
}

Trajectory::Trajectory(std::vector<StampedPose> poses) : poses_(std::move(poses)) {
  for (std::size_t i = 1; i < poses_.size(); ++i) {
    if (poses_[i].timestamp_ns <= poses_[i - 1].timestamp_ns) {
      throw Error(ErrorCode::kInvalidArgument,
                  "trajectory timestamps must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

std::optional<std::size_t> Trajectory::nearest_index(TimestampNs t, TimestampNs tolerance_ns) const {
  if (poses_.empty()) return std::nullopt;
  auto it = std::lower_bound(poses_.begin(), poses_.end(), t,
                             [](const StampedPose& p, TimestampNs v) { return p.timestamp_ns < v; });
  std::optional<std::size_t> best;
  TimestampNs best_dt = 0;
  auto consider = [&](std::vector<StampedPose>::const_iterator c) {
    const TimestampNs dt = c->timestamp_ns > t ? c->timestamp_ns - t : t - c->timestamp_ns;
    if (dt <= tolerance_ns && (!best || dt < best_dt)) {
      best = static_cast<std::size_t>(c - poses_.begin());
      best_dt = dt;
    }
  };
  if (it != poses_.end()) consider(it);
  if (it != poses_.begin()) consider(std::prev(it));
  return best;
}

std::optional<RigidPose> Trajectory::lookup(TimestampNs t, TimestampNs tolerance_ns) const {
  if (auto i = nearest_index(t, tolerance_ns)) return poses_[*i].pose;
  return std::nullopt;
}

TimestampNs Trajectory::span_ns() const {
  if (poses_.size() < 2) return 0;
  return poses_.back().timestamp_ns - poses_.front().timestamp_ns;
}

Trajectory Trajectory::transformed(const Similarity& t) const {
  std::vector<StampedPose> out;
  out.reserve(poses_.size());
  for (const auto& p : poses_) out.push_back({p.timestamp_ns, t.transform_pose(p.pose)});
  return Trajectory(std::move(out));
}

}  // namespace cpgt
