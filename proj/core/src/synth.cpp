#include "cpgt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "cpgt/camera.hpp"
#include "cpgt/error.hpp"

namespace cpgt {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

TimestampNs to_ns(double t_s) { return static_cast<TimestampNs>(std::llround(t_s * 1e9)); }

std::vector<Vec3> default_waypoints() {
  return {{0, 0, 1.5},   {15, 4, 1.8},   {28, 14, 2.2},  {24, 30, 1.6},
          {8, 36, 1.2},  {-8, 28, 1.7},  {-14, 12, 2.0}, {-6, -2, 1.5}};
}

}  // namespace

std::string_view to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kFigureEight: return "figure8";
    case TrajectoryKind::kSpline: return "spline";
    case TrajectoryKind::kPlatform: return "platform";
  }
  return "?";
}

TrajectoryKind trajectory_kind_from_string(std::string_view name) {
  if (name == "figure8" || name == "figure-eight") return TrajectoryKind::kFigureEight;
  if (name == "spline") return TrajectoryKind::kSpline;
  if (name == "platform") return TrajectoryKind::kPlatform;
  throw Error(ErrorCode::kInvalidArgument, "unknown trajectory kind '" + std::string(name) + "'");
}

Motion::Motion(const SynthConfig& config) : cfg_(config), duration_(config.duration_s) {
  if (!(duration_ > 0.0)) throw Error(ErrorCode::kInvalidArgument, "synthetic duration must be positive");
  if (cfg_.kind != TrajectoryKind::kSpline) return;
  if (cfg_.waypoints.empty()) cfg_.waypoints = default_waypoints();
  const int n = static_cast<int>(cfg_.waypoints.size());
  if (n < 3) throw Error(ErrorCode::kInvalidArgument, "spline trajectory needs at least 3 waypoints");
  const double h = duration_ / (n - 1);
  for (int i = 0; i < n; ++i) knots_.push_back(i * h);
  // Natural cubic spline: zero second derivative at both ends.
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    a(0, 0) = a(n - 1, n - 1) = 1.0;
    for (int i = 1; i + 1 < n; ++i) {
      a(i, i - 1) = h;
      a(i, i) = 4.0 * h;
      a(i, i + 1) = h;
      b[i] = 6.0 / h * (cfg_.waypoints[i + 1][axis] - 2.0 * cfg_.waypoints[i][axis] + cfg_.waypoints[i - 1][axis]);
    }
    const Eigen::VectorXd m = a.partialPivLu().solve(b);
    m_[axis].assign(m.data(), m.data() + n);
  }
}

void Motion::position_derivatives(double t, Vec3& p, Vec3& v, Vec3& a) const {
  switch (cfg_.kind) {
    case TrajectoryKind::kFigureEight: {
      const double w = kTwoPi / duration_;
      const double A = cfg_.eight_a, B = cfg_.eight_b, C = cfg_.eight_c;
      p = {A * std::sin(w * t), B * std::sin(2 * w * t), cfg_.height + C * std::sin(3 * w * t)};
      v = {A * w * std::cos(w * t), 2 * B * w * std::cos(2 * w * t), 3 * C * w * std::cos(3 * w * t)};
      a = {-A * w * w * std::sin(w * t), -4 * B * w * w * std::sin(2 * w * t), -9 * C * w * w * std::sin(3 * w * t)};
      return;
    }
    case TrajectoryKind::kPlatform: {
      const double v0 = cfg_.platform_speed;
      const double ws = kTwoPi / 20.0;
      const double wy = kTwoPi / 15.0;
      const double wz = kTwoPi / 7.0;
      const double ax = 0.5 * v0 / ws;
      const double S = cfg_.platform_sway;
      p = {v0 * t + ax * std::sin(ws * t), S * std::sin(wy * t), cfg_.height + 0.1 * std::sin(wz * t)};
      v = {v0 + ax * ws * std::cos(ws * t), S * wy * std::cos(wy * t), 0.1 * wz * std::cos(wz * t)};
      a = {-ax * ws * ws * std::sin(ws * t), -S * wy * wy * std::sin(wy * t), -0.1 * wz * wz * std::sin(wz * t)};
      return;
    }
    case TrajectoryKind::kSpline: {
      const int n = static_cast<int>(knots_.size());
      const double h = knots_[1] - knots_[0];
      const int i = std::clamp(static_cast<int>(std::floor(t / h)), 0, n - 2);
      const double u0 = knots_[i + 1] - t;  // distance to right knot
      const double u1 = t - knots_[i];      // distance to left knot
      for (int axis = 0; axis < 3; ++axis) {
        const double m0 = m_[axis][i], m1 = m_[axis][i + 1];
        const double y0 = cfg_.waypoints[i][axis], y1 = cfg_.waypoints[i + 1][axis];
        const double c0 = y0 / h - m0 * h / 6.0, c1 = y1 / h - m1 * h / 6.0;
        p[axis] = m0 * u0 * u0 * u0 / (6 * h) + m1 * u1 * u1 * u1 / (6 * h) + c0 * u0 + c1 * u1;
        v[axis] = -m0 * u0 * u0 / (2 * h) + m1 * u1 * u1 / (2 * h) - c0 + c1;
        a[axis] = m0 * u0 / h + m1 * u1 / h;
      }
      return;
    }
  }
}

MotionState Motion::at(double t) const {
  Vec3 p, v, a;
  position_derivatives(t, p, v, a);
  const double h2 = v.x() * v.x() + v.y() * v.y();
  if (h2 < 1e-12) throw Error(ErrorCode::kDegenerateConfiguration, "synthetic heading undefined at zero speed");
  const double yaw = std::atan2(v.y(), v.x());
  const double yaw_rate = (v.x() * a.y() - v.y() * a.x()) / h2;
  const double wp = kTwoPi * 4.0 / duration_;
  const double pitch = cfg_.pitch_amplitude_rad * std::sin(wp * t);
  const double pitch_rate = cfg_.pitch_amplitude_rad * wp * std::cos(wp * t);

  const Rotation rz = Rotation::about_axis(Vec3::UnitZ(), yaw);
  const Rotation ry = Rotation::about_axis(Vec3::UnitY(), pitch);
  MotionState s;
  s.world_from_device = RigidPose(rz * ry, p);
  s.velocity = v;
  s.acceleration = a;
  s.angular_velocity = ry.inverse() * Vec3(0, 0, yaw_rate) + Vec3(0, pitch_rate, 0);
  return s;
}

RigCalibration default_rig(const ImuNoise& noise) {
  RigCalibration rig;
  const double yaws[2] = {M_PI / 4.0, -M_PI / 4.0};
  const char* ids[2] = {"cam0", "cam1"};
  for (int c = 0; c < 2; ++c) {
    CameraModel cam;
    cam.kind = CameraKind::kKannalaBrandt4;
    cam.fx = 300.0;
    cam.fy = 300.5;
    cam.cx = 319.5;
    cam.cy = 239.5;
    cam.distortion = {0.02, -0.005, 0.001, -0.0002};
    cam.width = 640;
    cam.height = 480;
    const double phi = yaws[c];
    Mat3 r;
    r.col(0) = Vec3(std::sin(phi), -std::cos(phi), 0.0);  // right
    r.col(1) = Vec3(0.0, 0.0, -1.0);                      // down
    r.col(2) = Vec3(std::cos(phi), std::sin(phi), 0.0);   // forward
    const RigidPose device_from_camera(Rotation::from_matrix(r), Vec3(0.05, c == 0 ? 0.06 : -0.06, 0.0));
    rig.cameras.push_back({ids[c], cam, device_from_camera.inverse()});
  }
  rig.imu_from_device = RigidPose(Rotation::exp(Vec3(0.01, -0.02, 0.015)), Vec3(0.02, -0.01, 0.005));
  rig.imu_noise = noise;
  return rig;
}

SynthWorld gen_world(const SynthConfig& config) {
  if (!(config.duration_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "synthetic duration must be positive");
  if (!(config.camera_rate_hz > 0.0) || !(config.imu_rate_hz > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic sensor rates must be positive");
  }
  if (config.cp_count < 0 || config.landmark_count < 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic counts must be non-negative");
  }
  SynthWorld w;
  w.config = config;
  w.rig = default_rig(config.imu_noise);
  w.duration_ns = to_ns(config.duration_s);
  const Motion motion(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<StampedPose> poses;
  const auto frames = static_cast<std::int64_t>(std::floor(config.duration_s * config.camera_rate_hz + 1e-9));
  for (std::int64_t i = 0; i <= frames; ++i) {
    const TimestampNs ts = to_ns(static_cast<double>(i) / config.camera_rate_hz);
    const MotionState s = motion.at(static_cast<double>(ts) * 1e-9);
    poses.push_back({ts, s.world_from_device});
    w.velocities.push_back(s.velocity);
  }
  w.trajectory = Trajectory(std::move(poses));

  const int k = config.cp_count;
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n3d = static_cast<int>(std::lround(config.cp_3d_fraction * k));
  std::vector<bool> is3d(k, false);
  for (int i = 0; i < n3d; ++i) is3d[order[i]] = true;
  for (int i = 0; i < k; ++i) {
    const double t = (i + 0.5) / k * config.duration_s;
    const MotionState s = motion.at(t);
    Vec3 heading = s.velocity;
    heading.z() = 0.0;
    heading.normalize();
    const Vec3 left(-heading.y(), heading.x(), 0.0);
    const double side = (i % 2 == 0) ? 1.0 : -1.0;
    const double offset = config.cp_min_offset + (config.cp_max_offset - config.cp_min_offset) * unit(rng);
    const double ahead = -2.0 + 4.0 * unit(rng);
    Vec3 truth = s.world_from_device.translation() + side * offset * left + ahead * heading;
    truth.z() = 3.0 * unit(rng);

    ControlPoint cp;
    cp.id = "cp" + std::to_string(i);
    cp.dim = is3d[i] ? CpDim::k3D : CpDim::k2D;
    cp.covariance = Vec3(config.cp_sigma_xy * config.cp_sigma_xy, config.cp_sigma_xy * config.cp_sigma_xy,
                         config.cp_sigma_z * config.cp_sigma_z)
                        .asDiagonal();
    const Vec3 noise(gauss(rng) * config.cp_sigma_xy, gauss(rng) * config.cp_sigma_xy, gauss(rng) * config.cp_sigma_z);
    cp.position = truth + (config.cp_noise ? noise : Vec3::Zero());
    if (!cp.is_3d()) cp.position.z() = 0.0;
    w.cp_truth.push_back(truth);
    w.control_points.push_back(cp);
  }

  for (int i = 0; i < config.landmark_count; ++i) {
    const double t = unit(rng) * config.duration_s;
    const MotionState s = motion.at(t);
    Vec3 heading = s.velocity;
    heading.z() = 0.0;
    heading.normalize();
    const Vec3 left(-heading.y(), heading.x(), 0.0);
    const double side = unit(rng) < 0.5 ? 1.0 : -1.0;
    const double lateral = 3.0 + 12.0 * unit(rng);
    const double ahead = -5.0 + 10.0 * unit(rng);
    Vec3 p = s.world_from_device.translation() + side * lateral * left + ahead * heading;
    p.z() = 5.0 * unit(rng);
    w.landmarks.push_back(p);
  }
  return w;
}

namespace {

struct Projector {
  const SynthWorld& world;
  std::mt19937_64 rng;
  std::normal_distribution<double> gauss{0.0, 1.0};

  /// Noisy observations of `point` over every frame and camera.
  std::vector<Observation> observe(const Vec3& point, double sigma_px, double max_range) {
    std::vector<Observation> out;
    const double margin = std::max(2.0, 6.0 * sigma_px);
    const Mat2 cov = Mat2::Identity() * (sigma_px > 0.0 ? sigma_px * sigma_px : 1.0);
    for (const auto& sp : world.trajectory.poses()) {
      const RigidPose device_from_world = sp.pose.inverse();
      for (const auto& cam : world.rig.cameras) {
        const Vec3 pc = cam.camera_from_device * (device_from_world * point);
        if (pc.z() < 0.2 || pc.norm() > max_range) continue;
        const auto px = try_project(cam.model, pc);
        if (!px) continue;
        if (px->x() < margin || px->y() < margin || px->x() > cam.model.width - 1 - margin ||
            px->y() > cam.model.height - 1 - margin) {
          continue;
        }
        Observation o;
        o.image_id = sp.timestamp_ns;
        o.camera_id = cam.id;
        o.pixel = *px + sigma_px * Vec2(gauss(rng), gauss(rng));
        o.covariance = cov;
        out.push_back(std::move(o));
      }
    }
    return out;
  }
};

}  // namespace

SynthDetections gen_detections(const SynthWorld& world, std::uint64_t seed_offset) {
  Projector proj{world, std::mt19937_64(world.config.seed * 7919 + 1 + seed_offset)};
  SynthDetections out;
  for (std::size_t i = 0; i < world.control_points.size(); ++i) {
    auto obs = proj.observe(world.cp_truth[i], world.config.detection_sigma_px, world.config.cp_max_range);
    if (obs.empty()) {
      out.unobserved_cps.push_back(world.control_points[i].id);
      continue;
    }
    out.control_points.emplace(world.control_points[i].id, std::move(obs));
  }
  for (std::size_t l = 0; l < world.landmarks.size(); ++l) {
    auto obs = proj.observe(world.landmarks[l], world.config.feature_sigma_px, world.config.landmark_max_range);
    if (obs.size() < 2) continue;
    out.tracks.push_back({static_cast<std::int64_t>(l), std::move(obs)});
  }
  return out;
}

std::vector<ImuSample> gen_imu(const SynthWorld& world, std::uint64_t seed_offset) {
  const SynthConfig& cfg = world.config;
  const Motion motion(cfg);
  std::mt19937_64 rng(cfg.seed * 104729 + 3 + seed_offset);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const RigidPose device_from_imu = world.rig.imu_from_device.inverse();
  const Mat3 r_di = device_from_imu.rotation().matrix();
  const Vec3 lever = device_from_imu.translation();
  const double dt = 1.0 / cfg.imu_rate_hz;
  const double sg = cfg.imu_noise.gyro_noise_density / std::sqrt(dt);
  const double sa = cfg.imu_noise.accel_noise_density / std::sqrt(dt);
  // Angular acceleration by central differences of the analytic rate.
  constexpr double kH = 1e-4;

  std::vector<ImuSample> out;
  const auto n = static_cast<std::int64_t>(std::floor(cfg.duration_s * cfg.imu_rate_hz + 1e-9));
  out.reserve(static_cast<std::size_t>(n + 1));
  for (std::int64_t i = 0; i <= n; ++i) {
    const TimestampNs ts = to_ns(static_cast<double>(i) / cfg.imu_rate_hz);
    const double t = static_cast<double>(ts) * 1e-9;
    const MotionState s = motion.at(t);
    const Vec3 alpha = (motion.at(t + kH).angular_velocity - motion.at(t - kH).angular_velocity) / (2.0 * kH);
    const Vec3& w = s.angular_velocity;
    const Mat3 r_wd = s.world_from_device.rotation().matrix();
    const Vec3 accel_world = s.acceleration + r_wd * (alpha.cross(lever) + w.cross(w.cross(lever)));
    ImuSample sample;
    sample.timestamp_ns = ts;
    sample.gyro = r_di.transpose() * w + cfg.imu_bias.gyro;
    sample.accel = (r_wd * r_di).transpose() * (accel_world - cfg.gravity) + cfg.imu_bias.accel;
    if (cfg.imu_add_noise) {
      sample.gyro += sg * Vec3(gauss(rng), gauss(rng), gauss(rng));
      sample.accel += sa * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    out.push_back(sample);
  }
  return out;
}

Trajectory perturb_trajectory(const Trajectory& trajectory, const PerturbationModel& model) {
  if (trajectory.empty()) return trajectory;
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const TimestampNs t0 = trajectory.poses().front().timestamp_ns;
  const double span = static_cast<double>(trajectory.span_ns());
  std::vector<StampedPose> out;
  for (const auto& sp : trajectory.poses()) {
    const double tau = span > 0.0 ? static_cast<double>(sp.timestamp_ns - t0) / span : 0.0;
    Vec3 p = (1.0 + model.scale_drift_rate * tau) * sp.pose.translation();
    Rotation r = sp.pose.rotation();
    if (model.white_sigma_pos > 0.0) p += model.white_sigma_pos * Vec3(gauss(rng), gauss(rng), gauss(rng));
    if (model.white_sigma_rot > 0.0) {
      r = r * Rotation::exp(model.white_sigma_rot * Vec3(gauss(rng), gauss(rng), gauss(rng)));
    }
    if (model.dropout) {
      const double rel = static_cast<double>(sp.timestamp_ns - t0) * 1e-9;
      if (rel >= model.dropout->first && rel < model.dropout->second) continue;
    }
    out.push_back({sp.timestamp_ns, model.global.transform_pose(RigidPose(r, p))});
  }
  return Trajectory(std::move(out));
}

}  // namespace cpgt
