#include "cpgt/inertial.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpgt/error.hpp"

namespace cpgt {

namespace {

constexpr double kNsToS = 1e-9;
constexpr double kGapFactor = 5.0;
constexpr double kBiasValidity = 0.1;

ImuSample interpolate(const ImuSample& a, const ImuSample& b, TimestampNs t) {
  const double alpha = static_cast<double>(t - a.timestamp_ns) /
                       static_cast<double>(b.timestamp_ns - a.timestamp_ns);
  ImuSample s;
  s.timestamp_ns = t;
  s.gyro = (1.0 - alpha) * a.gyro + alpha * b.gyro;
  s.accel = (1.0 - alpha) * a.accel + alpha * b.accel;
  return s;
}

}  // namespace

void ImuNoise::validate() const {
  if (!(gyro_noise_density > 0.0) || !(accel_noise_density > 0.0) || !(gyro_random_walk > 0.0) ||
      !(accel_random_walk > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "IMU noise parameters must be positive");
  }
}

Eigen::Matrix<double, 6, 1> Bias::vector() const {
  Eigen::Matrix<double, 6, 1> v;
  v << gyro, accel;
  return v;
}

Bias Bias::from_vector(const Eigen::Matrix<double, 6, 1>& v) {
  Bias b;
  b.gyro = v.head<3>();
  b.accel = v.tail<3>();
  return b;
}

PreintegratedSegment preintegrate(std::span<const ImuSample> samples, const Bias& bias,
                                  const ImuNoise& noise) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "preintegration needs at least one sample interval");
  }
  std::vector<TimestampNs> periods;
  periods.reserve(samples.size() - 1);
  for (std::size_t k = 1; k < samples.size(); ++k) {
    if (samples[k].timestamp_ns <= samples[k - 1].timestamp_ns) {
      throw Error(ErrorCode::kInvalidArgument,
                  "IMU timestamps must be strictly increasing (sample " + std::to_string(k) + ")");
    }
    periods.push_back(samples[k].timestamp_ns - samples[k - 1].timestamp_ns);
  }

  PreintegratedSegment seg;
  seg.linearization_bias = bias;
  seg.start_ns = samples.front().timestamp_ns;
  seg.end_ns = samples.back().timestamp_ns;

  {
    std::vector<TimestampNs> sorted = periods;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double nominal = static_cast<double>(sorted[sorted.size() / 2]);
    for (TimestampNs p : periods) {
      if (static_cast<double>(p) > kGapFactor * nominal) seg.gap_warning = true;
    }
  }

  Mat3 rot = Mat3::Identity();
  Vec3 vel = Vec3::Zero();
  Vec3 pos = Vec3::Zero();
  Mat9 cov = Mat9::Zero();
  Mat3 j_rg = Mat3::Zero(), j_vg = Mat3::Zero(), j_va = Mat3::Zero();
  Mat3 j_pg = Mat3::Zero(), j_pa = Mat3::Zero();
  const double gyro_var = noise.gyro_noise_density * noise.gyro_noise_density;
  const double accel_var = noise.accel_noise_density * noise.accel_noise_density;
  double total = 0.0;

  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    const double dt = static_cast<double>(periods[k]) * kNsToS;
    const Vec3 w = 0.5 * (samples[k].gyro + samples[k + 1].gyro) - bias.gyro;
    const Vec3 phi = w * dt;
    const Mat3 step = so3_exp(phi);
    const Mat3 jr = so3_right_jacobian(phi);
    const Vec3 a0 = samples[k].accel - bias.accel;
    const Vec3 a1 = samples[k + 1].accel - bias.accel;
    const Mat3 r0 = rot;
    const Mat3 r1 = rot * step;
    const Vec3 acc = 0.5 * (r0 * a0 + r1 * a1);

    // Covariance propagation of (rotation, velocity, position) errors.
    const Mat3 a_theta = -0.5 * (r0 * hat(a0) + r1 * hat(a1) * step.transpose());
    const Mat3 r_avg = 0.5 * (r0 + r1);
    const Mat3 gyro_into_acc = 0.5 * r1 * hat(a1) * jr * dt;
    Mat9 a = Mat9::Identity();
    a.block<3, 3>(0, 0) = step.transpose();
    a.block<3, 3>(3, 0) = dt * a_theta;
    a.block<3, 3>(6, 0) = 0.5 * dt * dt * a_theta;
    a.block<3, 3>(6, 3) = dt * Mat3::Identity();
    Eigen::Matrix<double, 9, 6> b = Eigen::Matrix<double, 9, 6>::Zero();
    b.block<3, 3>(0, 0) = -jr * dt;
    b.block<3, 3>(3, 0) = dt * gyro_into_acc;
    b.block<3, 3>(3, 3) = dt * r_avg;
    b.block<3, 3>(6, 0) = 0.5 * dt * dt * gyro_into_acc;
    b.block<3, 3>(6, 3) = 0.5 * dt * dt * r_avg;
    Eigen::Matrix<double, 6, 1> q;
    q << Vec3::Constant(gyro_var / dt), Vec3::Constant(accel_var / dt);
    cov = a * cov * a.transpose() + b * q.asDiagonal() * b.transpose();

    // Exact first-order bias Jacobians of the midpoint step.
    const Mat3 j_rg_next = step.transpose() * j_rg - jr * dt;
    const Mat3 dacc_dbg = -0.5 * (r0 * hat(a0) * j_rg + r1 * hat(a1) * j_rg_next);
    const Mat3 dacc_dba = -r_avg;
    j_pg += j_vg * dt + 0.5 * dt * dt * dacc_dbg;
    j_pa += j_va * dt + 0.5 * dt * dt * dacc_dba;
    j_vg += dt * dacc_dbg;
    j_va += dt * dacc_dba;
    j_rg = j_rg_next;

    pos += vel * dt + 0.5 * acc * dt * dt;
    vel += acc * dt;
    rot = Rotation::from_matrix(r1).matrix();
    total += dt;
  }

  seg.delta_rotation = Rotation::from_matrix(rot);
  seg.delta_velocity = vel;
  seg.delta_position = pos;
  seg.delta_t = total;
  seg.covariance = 0.5 * (cov + cov.transpose());
  seg.d_rotation_d_gyro_bias = j_rg;
  seg.d_velocity_d_gyro_bias = j_vg;
  seg.d_velocity_d_accel_bias = j_va;
  seg.d_position_d_gyro_bias = j_pg;
  seg.d_position_d_accel_bias = j_pa;
  return seg;
}

PreintegratedSegment preintegrate_between(std::span<const ImuSample> stream, TimestampNs t_start,
                                          TimestampNs t_end, const Bias& bias, const ImuNoise& noise) {
  if (t_end <= t_start) {
    throw Error(ErrorCode::kInvalidArgument, "preintegration interval must have positive length");
  }
  if (stream.empty() || stream.front().timestamp_ns > t_start || stream.back().timestamp_ns < t_end) {
    throw Error(ErrorCode::kMissingImu, "IMU stream does not cover [" + std::to_string(t_start) + ", " +
                                            std::to_string(t_end) + "] ns");
  }
  auto by_time = [](const ImuSample& s, TimestampNs t) { return s.timestamp_ns < t; };
  auto first = std::lower_bound(stream.begin(), stream.end(), t_start, by_time);
  auto last = std::lower_bound(stream.begin(), stream.end(), t_end, by_time);

  std::vector<ImuSample> slice;
  slice.reserve(static_cast<std::size_t>(last - first) + 2);
  if (first->timestamp_ns != t_start) slice.push_back(interpolate(*std::prev(first), *first, t_start));
  for (auto it = first; it != last; ++it) slice.push_back(*it);
  if (last->timestamp_ns == t_end) {
    slice.push_back(*last);
  } else {
    slice.push_back(interpolate(*std::prev(last), *last, t_end));
  }
  return preintegrate(slice, bias, noise);
}

CorrectedDeltas bias_correct(const PreintegratedSegment& seg, const Bias& new_bias) {
  const Vec3 dbg = new_bias.gyro - seg.linearization_bias.gyro;
  const Vec3 dba = new_bias.accel - seg.linearization_bias.accel;
  CorrectedDeltas out;
  out.delta_rotation = seg.delta_rotation * Rotation::exp(seg.d_rotation_d_gyro_bias * dbg);
  out.delta_velocity = seg.delta_velocity + seg.d_velocity_d_gyro_bias * dbg + seg.d_velocity_d_accel_bias * dba;
  out.delta_position = seg.delta_position + seg.d_position_d_gyro_bias * dbg + seg.d_position_d_accel_bias * dba;
  out.large_correction_warning = dbg.norm() > kBiasValidity || dba.norm() > kBiasValidity;
  return out;
}

Vec9 imu_residual(const PreintegratedSegment& seg, const NavState& si, const NavState& sj, const Bias& bias_i,
                  const Vec3& gravity, ImuResidualJacobians* jac) {
  const CorrectedDeltas d = bias_correct(seg, bias_i);
  const double dt = seg.delta_t;
  const Mat3 ri = si.pose.rotation().matrix();
  const Mat3 rj = sj.pose.rotation().matrix();
  const Vec3& pi = si.pose.translation();
  const Vec3& pj = sj.pose.translation();

  const Mat3 rot_err = d.delta_rotation.matrix().transpose() * ri.transpose() * rj;
  const Vec3 r_rot = so3_log(rot_err);
  const Vec3 dv_world = sj.velocity - si.velocity - gravity * dt;
  const Vec3 dp_world = pj - pi - si.velocity * dt - 0.5 * gravity * dt * dt;
  const Vec3 r_vel = ri.transpose() * dv_world - d.delta_velocity;
  const Vec3 r_pos = ri.transpose() * dp_world - d.delta_position;

  Vec9 r;
  r << r_rot, r_vel, r_pos;

  if (jac) {
    const Mat3 jr_inv = so3_right_jacobian_inverse(r_rot);
    const Vec3 dbg = bias_i.gyro - seg.linearization_bias.gyro;
    jac->pose_i.setZero();
    jac->velocity_i.setZero();
    jac->bias_i.setZero();
    jac->pose_j.setZero();
    jac->velocity_j.setZero();

    jac->pose_i.block<3, 3>(0, 0) = -jr_inv * rj.transpose() * ri;
    jac->pose_i.block<3, 3>(3, 0) = hat(ri.transpose() * dv_world);
    jac->pose_i.block<3, 3>(6, 0) = hat(ri.transpose() * dp_world);
    jac->pose_i.block<3, 3>(6, 3) = -ri.transpose();

    jac->velocity_i.block<3, 3>(3, 0) = -ri.transpose();
    jac->velocity_i.block<3, 3>(6, 0) = -ri.transpose() * dt;

    jac->pose_j.block<3, 3>(0, 0) = jr_inv;
    jac->pose_j.block<3, 3>(6, 3) = ri.transpose();
    jac->velocity_j.block<3, 3>(3, 0) = ri.transpose();

    const Mat3 exp_r = so3_exp(r_rot);
    jac->bias_i.block<3, 3>(0, 0) = -jr_inv * exp_r.transpose() *
                                    so3_right_jacobian(seg.d_rotation_d_gyro_bias * dbg) *
                                    seg.d_rotation_d_gyro_bias;
    jac->bias_i.block<3, 3>(3, 0) = -seg.d_velocity_d_gyro_bias;
    jac->bias_i.block<3, 3>(3, 3) = -seg.d_velocity_d_accel_bias;
    jac->bias_i.block<3, 3>(6, 0) = -seg.d_position_d_gyro_bias;
    jac->bias_i.block<3, 3>(6, 3) = -seg.d_position_d_accel_bias;
  }
  return r;
}

Vec6 bias_walk_residual(const Bias& bias_i, const Bias& bias_j) { return bias_j.vector() - bias_i.vector(); }

Eigen::Matrix<double, 6, 6> bias_walk_covariance(const ImuNoise& noise, double dt) {
  Eigen::Matrix<double, 6, 1> d;
  d << Vec3::Constant(noise.gyro_random_walk * noise.gyro_random_walk * dt),
      Vec3::Constant(noise.accel_random_walk * noise.accel_random_walk * dt);
  return d.asDiagonal();
}

}  // namespace cpgt
