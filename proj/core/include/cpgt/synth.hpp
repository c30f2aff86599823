#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpgt/alignment.hpp"
#include "cpgt/geometry.hpp"
#include "cpgt/inertial.hpp"
#include "cpgt/rig.hpp"
#include "cpgt/triangulation.hpp"

namespace cpgt {

enum class TrajectoryKind { kFigureEight, kSpline, kPlatform };
std::string_view to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(std::string_view name);

struct SynthConfig {
  std::uint64_t seed = 42;
  double duration_s = 60.0;
  TrajectoryKind kind = TrajectoryKind::kFigureEight;

  // figure-eight: (A sin wt, B sin 2wt, z0 + C sin 3wt), w = 2 pi / duration
  double eight_a = 20.0;
  double eight_b = 10.0;
  double eight_c = 0.5;
  double height = 1.5;
  double pitch_amplitude_rad = 0.05;
  std::vector<Vec3> waypoints;  ///< spline kind; defaults to a loop when empty
  double platform_speed = 4.0;  ///< m/s along x
  double platform_sway = 1.5;   ///< m lateral amplitude

  int cp_count = 12;
  double cp_3d_fraction = 0.5;
  double cp_min_offset = 4.0;  ///< lateral distance from the path, m
  double cp_max_offset = 8.0;
  double cp_sigma_xy = 0.01;   ///< survey std, m
  double cp_sigma_z = 0.02;
  bool cp_noise = false;       ///< perturb surveyed positions by their covariance

  double detection_sigma_px = 0.0;
  double cp_max_range = 30.0;
  int landmark_count = 0;
  double landmark_max_range = 20.0;
  double feature_sigma_px = 0.0;

  double camera_rate_hz = 10.0;
  double imu_rate_hz = 1000.0;
  ImuNoise imu_noise;
  bool imu_add_noise = false;
  Bias imu_bias;
  Vec3 gravity = default_gravity();
};

/// Kinematic state of the device frame at one instant.
struct MotionState {
  RigidPose world_from_device;
  Vec3 velocity = Vec3::Zero();          ///< world frame
  Vec3 acceleration = Vec3::Zero();      ///< world frame
  Vec3 angular_velocity = Vec3::Zero();  ///< device frame
};

/// Analytic C2 trajectory with heading following the horizontal velocity.
class Motion {
 public:
  explicit Motion(const SynthConfig& config);
  MotionState at(double t_s) const;
  double duration() const { return duration_; }

 private:
  void position_derivatives(double t, Vec3& p, Vec3& v, Vec3& a) const;

  SynthConfig cfg_;
  double duration_;
  std::vector<double> knots_;
  std::array<std::vector<double>, 3> m_;  ///< spline second derivatives per axis
};

struct FeatureTrack {
  std::int64_t track_id = 0;
  std::vector<Observation> observations;
};

struct SynthWorld {
  SynthConfig config;
  RigCalibration rig;
  Trajectory trajectory;           ///< device poses at the camera rate, world frame
  std::vector<Vec3> velocities;    ///< per trajectory pose, world frame
  std::vector<ControlPoint> control_points;  ///< surveyed values
  std::vector<Vec3> cp_truth;      ///< exact world positions
  std::vector<Vec3> landmarks;
  TimestampNs duration_ns = 0;
};

/// Throws Error(kInvalidArgument) for non-positive duration or rates.
SynthWorld gen_world(const SynthConfig& config);

/// Default two-camera fisheye rig: cameras yawed +-45 degrees, y down.
RigCalibration default_rig(const ImuNoise& noise = {});

struct SynthDetections {
  ObservationMap control_points;     ///< by control-point id
  std::vector<FeatureTrack> tracks;  ///< one per observed landmark, >= 2 observations
  std::vector<std::string> unobserved_cps;
};

/// Projects CPs and landmarks into every camera frame when in front of the
/// camera, inside the image and within range, then adds Gaussian noise.
SynthDetections gen_detections(const SynthWorld& world, std::uint64_t seed_offset = 0);

/// IMU samples at the configured rate, expressed in the IMU frame.
std::vector<ImuSample> gen_imu(const SynthWorld& world, std::uint64_t seed_offset = 0);

/// Relative-motion perturbations used to build known-error fixtures.
struct PerturbationModel {
  std::uint64_t seed = 0;
  double white_sigma_pos = 0.0;  ///< m
  double white_sigma_rot = 0.0;  ///< rad
  double scale_drift_rate = 0.0; ///< positions scaled by (1 + rate * tau), tau in [0, 1]
  std::optional<std::pair<double, double>> dropout;  ///< [start, end) seconds from the first pose
  Similarity global;             ///< applied last
};

Trajectory perturb_trajectory(const Trajectory& trajectory, const PerturbationModel& model);

}  // namespace cpgt
