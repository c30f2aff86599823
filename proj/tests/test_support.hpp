#pragma once

#include <string>
#include <vector>

#include "cpgt/camera.hpp"
#include "cpgt/geometry.hpp"
#include "cpgt/pipeline.hpp"
#include "cpgt/rig.hpp"
#include "cpgt/synth.hpp"
#include "cpgt/triangulation.hpp"

namespace cpgt::testing {

inline constexpr TimestampNs kSecond = 1'000'000'000;

/// One pinhole camera "cam" coinciding with the device frame.
inline RigCalibration pinhole_rig(double f = 400.0) {
  RigCalibration rig;
  rig.cameras.push_back({"cam", CameraModel::pinhole(f, f, 320, 240, 640, 480), RigidPose()});
  return rig;
}

/// World-from-camera pose at `eye` with the optical axis towards `target`.
inline RigidPose looking_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitY());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return RigidPose(Rotation::from_matrix(r), eye);
}

/// Trajectory with one pose per second.
inline Trajectory trajectory_of(const std::vector<RigidPose>& poses) {
  std::vector<StampedPose> out;
  for (std::size_t i = 0; i < poses.size(); ++i) out.push_back({static_cast<TimestampNs>(i) * kSecond, poses[i]});
  return Trajectory(out);
}

/// Noiseless detections of `point` from every pose of a single-camera rig.
inline std::vector<Observation> observe(const Vec3& point, const Trajectory& traj, const RigCalibration& rig,
                                        double sigma_px = 1.0) {
  std::vector<Observation> obs;
  const RigCamera& cam = rig.cameras.front();
  for (const auto& sp : traj.poses()) {
    const Vec3 pc = cam.camera_from_device * (sp.pose.inverse() * point);
    Observation o;
    o.image_id = sp.timestamp_ns;
    o.camera_id = cam.id;
    o.pixel = project(cam.model, pc);
    o.covariance = Mat2::Identity() * sigma_px * sigma_px;
    obs.push_back(o);
  }
  return obs;
}

/// Synthetic sequence with its trajectory expressed in a local frame
/// (world = world_from_local * local) and the control points triangulated.
struct Scene {
  SynthWorld world;
  SynthDetections detections;
  Similarity world_from_local;
  Trajectory local;
  ObservationMap posed;
  TriangulationMap triangulations;
};

inline Scene make_scene(SynthConfig config, const Similarity& world_from_local = Similarity()) {
  Scene s;
  s.world = gen_world(config);
  s.detections = gen_detections(s.world);
  s.world_from_local = world_from_local;
  PerturbationModel m;
  m.global = world_from_local.inverse();
  s.local = perturb_trajectory(s.world.trajectory, m);
  s.posed = observations_with_poses(s.detections.control_points, s.local, 10'000'000);
  s.triangulations = triangulate_all(s.posed, s.local, s.world.rig, s.world.control_points, {});
  return s;
}

inline SynthConfig short_config(double duration_s = 20.0) {
  SynthConfig c;
  c.duration_s = duration_s;
  return c;
}

}  // namespace cpgt::testing
