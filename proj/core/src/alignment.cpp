#include "cpgt/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "cpgt/error.hpp"
#include "cpgt/factors.hpp"

namespace cpgt {

Eigen::MatrixXd ControlPoint::measurement_covariance() const {
  if (is_3d()) return covariance;
  return covariance.topLeftCorner<2, 2>();
}

Similarity umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::kInvalidArgument, "umeyama point sets differ in size");
  }
  const std::size_t n = src.size();
  if (n < 3) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "similarity fit needs at least 3 point pairs, got " + std::to_string(n));
  }
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= static_cast<double>(n);
  mu_dst /= static_cast<double>(n);

  Mat3 cross = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - mu_src;
    const Vec3 b = dst[i] - mu_dst;
    cross += b * a.transpose();
    spread += a * a.transpose();
    var_src += a.squaredNorm();
  }
  cross /= static_cast<double>(n);
  var_src /= static_cast<double>(n);

  const Eigen::Vector3d sv = Eigen::JacobiSVD<Mat3>(spread).singularValues();
  if (!(sv[0] > 0.0) || sv[1] < 1e-10 * sv[0]) {
    throw Error(ErrorCode::kDegenerateConfiguration, "source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  const double scale = with_scale ? (svd.singularValues().asDiagonal() * s).trace() / var_src : 1.0;
  const Vec3 t = mu_dst - scale * r * mu_src;
  return Similarity(scale, Rotation::from_matrix(r), t);
}

Similarity umeyama_init(std::span<const PointPair> pairs) {
  std::vector<Vec3> src, dst;
  for (const auto& p : pairs) {
    src.push_back(p.local);
    dst.push_back(p.world);
  }
  return umeyama(src, dst, true);
}

Similarity horizontal_init(std::span<const PointPair> pairs, std::span<const PointPair> vertical_pairs) {
  if (pairs.size() < 2) {
    throw Error(ErrorCode::kDegenerateConfiguration, "horizontal fit needs at least 2 control points");
  }
  Vec2 mu_l = Vec2::Zero(), mu_w = Vec2::Zero();
  for (const auto& p : pairs) {
    mu_l += p.local.head<2>();
    mu_w += p.world.head<2>();
  }
  mu_l /= static_cast<double>(pairs.size());
  mu_w /= static_cast<double>(pairs.size());
  double dot = 0.0, crs = 0.0, var = 0.0;
  for (const auto& p : pairs) {
    const Vec2 a = p.local.head<2>() - mu_l;
    const Vec2 b = p.world.head<2>() - mu_w;
    dot += a.dot(b);
    crs += a.x() * b.y() - a.y() * b.x();
    var += a.squaredNorm();
  }
  if (var < 1e-12) {
    throw Error(ErrorCode::kDegenerateConfiguration, "horizontal control points are coincident");
  }
  const double yaw = std::atan2(crs, dot);
  const double scale = std::hypot(dot, crs) / var;
  const Rotation rot = Rotation::about_axis(Vec3::UnitZ(), yaw);
  const Vec3 rl(mu_l.x(), mu_l.y(), 0.0);
  Vec3 t;
  t.head<2>() = mu_w - scale * (rot * rl).head<2>();
  t.z() = 0.0;
  if (!vertical_pairs.empty()) {
    double dz = 0.0;
    for (const auto& p : vertical_pairs) dz += p.world.z() - scale * (rot * p.local).z();
    t.z() = dz / static_cast<double>(vertical_pairs.size());
  }
  return Similarity(scale, rot, t);
}

InitialAlignment initial_alignment(const TriangulationMap& triangulations, std::span<const ControlPoint> cps) {
  std::vector<PointPair> full, horizontal;
  for (const auto& cp : cps) {
    auto it = triangulations.find(cp.id);
    if (it == triangulations.end()) continue;
    horizontal.push_back({it->second.position, cp.position});
    if (cp.is_3d()) full.push_back({it->second.position, cp.position});
  }
  if (full.size() >= 3) {
    try {
      return {umeyama_init(full), false};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateConfiguration) throw;
    }
  }
  return {horizontal_init(horizontal, full), true};
}

SparseAlignment joint_sparse_align(const TriangulationMap& triangulations, const ObservationMap& observations,
                                   const Trajectory& poses, const RigCalibration& rig,
                                   std::span<const ControlPoint> cps, const Similarity& init,
                                   const AlignmentOptions& options) {
  // Rig lever arms are metric; in the local frame they shrink by the local-to-world scale.
  double lever = 0.0;
  for (const auto& cam : rig.cameras) lever = std::max(lever, cam.camera_from_device.translation().norm());

  SparseAlignment out;
  std::vector<std::optional<BlockId>> proxies(cps.size());
  Problem problem;
  Similarity current = init;
  double lever_scale = 1.0 / init.scale();
  for (int pass = 0; pass < options.max_scale_passes; ++pass) {
    problem = Problem();
    std::fill(proxies.begin(), proxies.end(), std::nullopt);
    const BlockId sim = problem.add_similarity(current);
    int used = 0, used_3d = 0;
    for (std::size_t c = 0; c < cps.size(); ++c) {
      const auto& cp = cps[c];
      auto tri = triangulations.find(cp.id);
      auto obs = observations.find(cp.id);
      if (tri == triangulations.end() || obs == observations.end() || tri->second.inliers.size() < 2) continue;
      const BlockId proxy = problem.add_vec3(tri->second.position);
      proxies[c] = proxy;
      for (std::size_t i : tri->second.inliers) {
        const Observation& o = obs->second.at(i);
        auto device = poses.lookup(o.image_id, options.pose_tolerance_ns);
        if (!device) {
          throw Error(ErrorCode::kInvalidArgument, "no pose for frame " + std::to_string(o.image_id));
        }
        const RigidPose device_from_camera = rig.camera(o.camera_id).camera_from_device.inverse();
        const RigidPose scaled(device_from_camera.rotation(), lever_scale * device_from_camera.translation());
        const RigidPose cam_from_frame = (*device * scaled).inverse();
        problem.add_residual_block(
            ResidualGroup::kMarkerReprojection,
            std::make_shared<FixedPoseReprojectionCost>(rig.camera(o.camera_id).model, cam_from_frame, o.pixel),
            {proxy}, o.covariance, RobustLoss::huber(options.reprojection_huber));
      }
      problem.add_residual_block(ResidualGroup::kCpWorld,
                                 std::make_shared<SimilarityPointCost>(cp.position, !cp.is_3d()), {sim, proxy},
                                 cp.measurement_covariance());
      ++used;
      if (cp.is_3d()) ++used_3d;
    }
    if (used < 3 || used_3d < 1) {
      throw Error(ErrorCode::kDegenerateConfiguration,
                  "joint alignment needs at least 3 triangulated control points including one 3D point (have " +
                      std::to_string(used) + ", " + std::to_string(used_3d) + " in 3D)");
    }

    const SolveReport report = solve(problem, options.solver);
    if (pass == 0) out.initial_cost = report.initial_cost;
    out.final_cost = report.final_cost;
    current = problem.similarity(sim);
    const double next = 1.0 / current.scale();
    const bool settled = std::abs(next - lever_scale) * lever <= options.lever_tolerance_m;
    lever_scale = next;
    if (settled) break;
  }
  out.world_from_local = current;

  const auto errors_2d = cp_alignment_errors(out.world_from_local, triangulations, cps, ErrorMode::k2D);
  const auto errors_3d = cp_alignment_errors(out.world_from_local, triangulations, cps, ErrorMode::k3D);
  for (std::size_t c = 0; c < cps.size(); ++c) {
    const auto& cp = cps[c];
    CpAlignmentRecord rec;
    rec.id = cp.id;
    rec.dim = cp.dim;
    rec.used = proxies[c].has_value();
    if (rec.used) rec.proxy = problem.vec3(*proxies[c]);
    rec.measurement_uncertainty = sqrt_spectral_norm(cp.measurement_covariance());
    auto tri = triangulations.find(cp.id);
    if (tri != triangulations.end()) {
      rec.triangulated = true;
      rec.covariance_metric = propagate_covariance(tri->second.covariance, out.world_from_local);
      rec.triangulation_uncertainty = sqrt_spectral_norm(rec.covariance_metric);
    }
    rec.error_2d = errors_2d[c].error;
    if (!errors_3d[c].excluded) rec.error_3d = errors_3d[c].error;
    out.records.push_back(std::move(rec));
  }
  return out;
}

SparseAlignment sparse_align(const TriangulationMap& triangulations, const ObservationMap& observations,
                             const Trajectory& poses, const RigCalibration& rig, std::span<const ControlPoint> cps,
                             const AlignmentOptions& options) {
  const InitialAlignment init = initial_alignment(triangulations, cps);
  SparseAlignment out = joint_sparse_align(triangulations, observations, poses, rig, cps, init.transform, options);
  out.horizontal_fallback = init.horizontal_fallback;
  return out;
}

std::vector<CpError> cp_alignment_errors(const Similarity& world_from_local, const TriangulationMap& triangulations,
                                         std::span<const ControlPoint> cps, ErrorMode mode) {
  std::vector<CpError> out;
  out.reserve(cps.size());
  for (const auto& cp : cps) {
    CpError e;
    e.id = cp.id;
    if (mode == ErrorMode::k3D && !cp.is_3d()) {
      e.excluded = true;
      out.push_back(e);
      continue;
    }
    auto tri = triangulations.find(cp.id);
    if (tri != triangulations.end()) {
      const Vec3 d = cp.position - world_from_local.apply(tri->second.position);
      e.error = mode == ErrorMode::k2D ? d.head<2>().norm() : d.norm();
    }
    out.push_back(e);
  }
  return out;
}

Mat3 propagate_covariance(const Mat3& covariance, const Similarity& transform) {
  const Mat3 r = transform.rotation().matrix();
  return transform.scale() * transform.scale() * r * covariance * r.transpose();
}

double sqrt_spectral_norm(const Eigen::MatrixXd& covariance) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace cpgt
