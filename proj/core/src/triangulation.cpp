#include "cpgt/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

#include "cpgt/error.hpp"
#include "cpgt/factors.hpp"
#include "cpgt/solver.hpp"

namespace cpgt {

namespace {

struct View {
  RigidPose camera_to_frame;
  const CameraModel* camera = nullptr;
  std::optional<Vec3> ray;  ///< frame-frame bearing, absent if the pixel cannot be unprojected
};

std::vector<View> resolve_views(std::span<const Observation> obs, const Trajectory& poses,
                                const RigCalibration& rig, TimestampNs tolerance) {
  std::vector<View> views;
  views.reserve(obs.size());
  for (const auto& o : obs) {
    View v;
    v.camera_to_frame = observation_camera_pose(o, poses, rig, tolerance);
    v.camera = &rig.camera(o.camera_id).model;
    try {
      v.ray = v.camera_to_frame.rotation() * unproject(*v.camera, o.pixel);
    } catch (const Error&) {
      v.ray.reset();
    }
    views.push_back(std::move(v));
  }
  return views;
}

double view_error(const View& v, const Observation& o, const Vec3& point) {
  const Vec3 p_cam = v.camera_to_frame.inverse() * point;
  auto px = try_project(*v.camera, p_cam);
  if (!px) return std::numeric_limits<double>::infinity();
  return (*px - o.pixel).norm();
}

std::optional<Vec3> midpoint(const Vec3& c1, const Vec3& d1, const Vec3& c2, const Vec3& d2, bool need_front) {
  const Vec3 w = c1 - c2;
  const double b = d1.dot(d2);
  const double denom = 1.0 - b * b;
  if (denom < 1e-15) return std::nullopt;
  const double d = d1.dot(w), e = d2.dot(w);
  const double t1 = (b * e - d) / denom;
  const double t2 = (e - b * d) / denom;
  if (need_front && (t1 <= 0.0 || t2 <= 0.0)) return std::nullopt;
  return 0.5 * ((c1 + t1 * d1) + (c2 + t2 * d2));
}

// Gauss-Newton on the whitened reprojection error of a subset.
Vec3 gauss_newton(Vec3 point, std::span<const Observation> obs, const std::vector<View>& views,
                  const std::vector<std::size_t>& subset) {
  for (int it = 0; it < 10; ++it) {
    Mat3 h = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    for (std::size_t i : subset) {
      const RigidPose cam_from_frame = views[i].camera_to_frame.inverse();
      ProjectionJacobian jp;
      auto px = try_project(*views[i].camera, cam_from_frame * point, &jp);
      if (!px) return point;
      const Eigen::Matrix<double, 2, 3> j = jp * cam_from_frame.rotation().matrix();
      const Mat2 info = obs[i].covariance.inverse();
      const Vec2 r = *px - obs[i].pixel;
      h += j.transpose() * info * j;
      g += j.transpose() * info * r;
    }
    Eigen::LDLT<Mat3> ldlt(h);
    if (ldlt.info() != Eigen::Success) return point;
    const Vec3 step = -ldlt.solve(g);
    if (!step.allFinite()) return point;
    point += step;
    if (step.norm() < 1e-12 * (1.0 + point.norm())) break;
  }
  return point;
}

struct Consensus {
  std::vector<std::size_t> inliers;
  double error_sum = 0.0;
};

Consensus score(const Vec3& point, std::span<const Observation> obs, const std::vector<View>& views,
                double threshold) {
  Consensus c;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double e = view_error(views[i], obs[i], point);
    if (e <= threshold) {
      c.inliers.push_back(i);
      c.error_sum += e * e;
    }
  }
  return c;
}

bool better(const Consensus& a, const Consensus& b) {
  if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
  return a.error_sum < b.error_sum;
}

}  // namespace

RigidPose observation_camera_pose(const Observation& obs, const Trajectory& poses, const RigCalibration& rig,
                                  TimestampNs tolerance_ns) {
  auto device = poses.lookup(obs.image_id, tolerance_ns);
  if (!device) {
    throw Error(ErrorCode::kInvalidArgument, "no pose for image " + std::to_string(obs.image_id));
  }
  return *device * rig.camera(obs.camera_id).camera_from_device.inverse();
}

double reprojection_error(const Vec3& point, const Observation& obs, const Trajectory& poses,
                          const RigCalibration& rig, TimestampNs tolerance_ns) {
  const RigidPose cam_to_frame = observation_camera_pose(obs, poses, rig, tolerance_ns);
  auto px = try_project(rig.camera(obs.camera_id).model, cam_to_frame.inverse() * point);
  if (!px) return std::numeric_limits<double>::infinity();
  return (*px - obs.pixel).norm();
}

RansacResult triangulate_ransac(std::span<const Observation> obs, const Trajectory& poses,
                                const RigCalibration& rig, const TriangulationOptions& options) {
  if (obs.size() < 2) {
    throw Error(ErrorCode::kInsufficientObservations,
                "triangulation needs at least 2 observations, got " + std::to_string(obs.size()));
  }
  const auto views = resolve_views(obs, poses, rig, options.pose_tolerance_ns);
  const double min_angle = options.min_ray_angle_deg * std::numbers::pi / 180.0;
  const std::size_t n = obs.size();

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= static_cast<std::size_t>(options.max_iterations)) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (pairs.size() < static_cast<std::size_t>(options.max_iterations)) {
      const std::size_t i = pick(rng), j = pick(rng);
      if (i != j) pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }

  Consensus best;
  Vec3 best_point = Vec3::Zero();
  bool any_geometry = false;
  for (auto [i, j] : pairs) {
    if (!views[i].ray || !views[j].ray) continue;
    const Vec3& d1 = *views[i].ray;
    const Vec3& d2 = *views[j].ray;
    const double angle = std::acos(std::clamp(d1.dot(d2), -1.0, 1.0));
    if (angle < min_angle) continue;
    const bool need_front = views[i].camera->has_cheirality() && views[j].camera->has_cheirality();
    auto candidate = midpoint(views[i].camera_to_frame.translation(), d1, views[j].camera_to_frame.translation(),
                              d2, need_front);
    if (!candidate) continue;
    any_geometry = true;
    Consensus c = score(*candidate, obs, views, options.threshold_px);
    if (!better(c, best) || c.inliers.size() < 2) continue;
    // Local optimization: refit on inliers until consensus stops growing.
    Vec3 point = *candidate;
    for (int round = 0; round < 3; ++round) {
      const Vec3 refined = gauss_newton(point, obs, views, c.inliers);
      Consensus rc = score(refined, obs, views, options.threshold_px);
      if (!better(rc, c)) break;
      point = refined;
      c = std::move(rc);
    }
    best = std::move(c);
    best_point = point;
  }
  if (!any_geometry) {
    throw Error(ErrorCode::kDegenerateGeometry, "all candidate ray pairs are near-parallel or invalid");
  }
  if (best.inliers.size() < 2) {
    throw Error(ErrorCode::kNoConsensus, "no triangulation hypothesis has at least 2 inliers");
  }
  return {best_point, best.inliers};
}

namespace {

Problem build_refine_problem(const Vec3& initial, std::span<const Observation> obs,
                             std::span<const std::size_t> subset, const Trajectory& poses,
                             const RigCalibration& rig, TimestampNs tolerance, BlockId* point_block) {
  Problem problem;
  *point_block = problem.add_vec3(initial);
  for (std::size_t i : subset) {
    const auto& o = obs[i];
    const RigidPose cam_from_frame = observation_camera_pose(o, poses, rig, tolerance).inverse();
    auto cost = std::make_shared<FixedPoseReprojectionCost>(rig.camera(o.camera_id).model, cam_from_frame, o.pixel);
    problem.add_residual_block(ResidualGroup::kMarkerReprojection, cost, {*point_block}, o.covariance);
  }
  return problem;
}

}  // namespace

TriangulatedCP refine_triangulation(const Vec3& initial, std::span<const Observation> obs,
                                    std::span<const std::size_t> inliers, const Trajectory& poses,
                                    const RigCalibration& rig, const TriangulationOptions& options) {
  if (inliers.size() < 2) {
    throw Error(ErrorCode::kInsufficientObservations,
                "refinement needs at least 2 inliers, got " + std::to_string(inliers.size()));
  }
  BlockId point_block;
  Problem problem = build_refine_problem(initial, obs, inliers, poses, rig, options.pose_tolerance_ns, &point_block);
  solve(problem);

  TriangulatedCP cp;
  cp.position = problem.vec3(point_block);
  cp.inliers.assign(inliers.begin(), inliers.end());
  double sum = 0.0;
  for (std::size_t i : inliers) {
    const auto& o = obs[i];
    const auto& cam = rig.camera(o.camera_id).model;
    const Vec3 p_cam = observation_camera_pose(o, poses, rig, options.pose_tolerance_ns).inverse() * cp.position;
    if (cam.has_cheirality() && !(p_cam.z() > 0.0)) {
      throw Error(ErrorCode::kBehindCamera, "refined point is behind inlier camera at image " +
                                                std::to_string(o.image_id));
    }
    sum += reprojection_error(cp.position, o, poses, rig, options.pose_tolerance_ns);
  }
  cp.mean_reprojection_error_px = sum / static_cast<double>(inliers.size());
  return cp;
}

Mat3 triangulation_covariance(const TriangulatedCP& cp, std::span<const Observation> obs, const Trajectory& poses,
                              const RigCalibration& rig, const TriangulationOptions& options) {
  if (cp.inliers.size() < 2) {
    throw Error(ErrorCode::kDegenerateGeometry, "covariance needs at least 2 inliers");
  }
  BlockId point_block;
  Problem problem =
      build_refine_problem(cp.position, obs, cp.inliers, poses, rig, options.pose_tolerance_ns, &point_block);
  try {
    return marginal_covariance(problem, point_block);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kRankDeficient) throw Error(ErrorCode::kDegenerateGeometry, e.what());
    throw;
  }
}

TriangulatedCP triangulate_control_point(const std::string& cp_id, std::span<const Observation> obs,
                                         const Trajectory& poses, const RigCalibration& rig,
                                         const TriangulationOptions& options) {
  const RansacResult init = triangulate_ransac(obs, poses, rig, options);
  TriangulatedCP cp = refine_triangulation(init.point, obs, init.inliers, poses, rig, options);
  cp.cp_id = cp_id;
  cp.covariance = triangulation_covariance(cp, obs, poses, rig, options);
  return cp;
}

double triangulation_cost(const Vec3& point, std::span<const Observation> obs, std::span<const std::size_t> subset,
                          const Trajectory& poses, const RigCalibration& rig, TimestampNs tolerance_ns) {
  double total = 0.0;
  for (std::size_t i : subset) {
    const auto& o = obs[i];
    const RigidPose cam_to_frame = observation_camera_pose(o, poses, rig, tolerance_ns);
    auto px = try_project(rig.camera(o.camera_id).model, cam_to_frame.inverse() * point);
    if (!px) return std::numeric_limits<double>::infinity();
    const Vec2 r = *px - o.pixel;
    total += r.dot(o.covariance.inverse() * r);
  }
  return total;
}

}  // namespace cpgt
