#include "cpgt/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "cpgt/error.hpp"
#include "cpgt/factors.hpp"
#include "cpgt/triangulation.hpp"

namespace cpgt {

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::kFull ? "full" : "inertial-only";
}

FusionMode fusion_mode_from_string(std::string_view name) {
  if (name == "full") return FusionMode::kFull;
  if (name == "inertial-only") return FusionMode::kInertialOnly;
  throw Error(ErrorCode::kInvalidArgument, "unknown fusion mode '" + std::string(name) + "'");
}

namespace {

void check_config(const FusionConfig& c) {
  if (c.rounds < 1) throw Error(ErrorCode::kInvalidArgument, "fusion needs at least one reweighting round");
  if (!(c.cp_deflation > 0.0 && c.cp_deflation <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "CP covariance deflation must lie in (0, 1]");
  }
  if (!(c.min_variance_factor > 0.0 && c.min_variance_factor <= 1.0 && c.max_variance_factor >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "variance factor bounds must bracket 1");
  }
  if (c.keyframe_stride < 1) throw Error(ErrorCode::kInvalidArgument, "keyframe stride must be positive");
}

/// Keyframe intervals the IMU stream cannot bridge.
std::vector<std::pair<TimestampNs, TimestampNs>> imu_holes(std::span<const ImuSample> imu,
                                                           std::span<const TimestampNs> stamps) {
  std::vector<std::pair<TimestampNs, TimestampNs>> holes;
  auto before = [](const ImuSample& s, TimestampNs t) { return s.timestamp_ns < t; };
  for (std::size_t k = 0; k + 1 < stamps.size(); ++k) {
    const TimestampNs t0 = stamps[k], t1 = stamps[k + 1];
    if (imu.empty() || imu.front().timestamp_ns > t0 || imu.back().timestamp_ns < t1) {
      holes.emplace_back(t0, t1);
      continue;
    }
    auto first = std::lower_bound(imu.begin(), imu.end(), t0, before);
    if (first != imu.begin() && first->timestamp_ns > t0) --first;
    auto last = std::lower_bound(imu.begin(), imu.end(), t1, before);
    TimestampNs widest = 0;
    for (auto it = first; it != last && std::next(it) != imu.end(); ++it) {
      widest = std::max(widest, std::next(it)->timestamp_ns - it->timestamp_ns);
    }
    if (widest >= t1 - t0) holes.emplace_back(t0, t1);
  }
  return holes;
}

/// Observations landing on keyframes, with their keyframe index.
std::vector<std::pair<std::size_t, const Observation*>> keyframe_observations(
    std::span<const Observation> obs, const Trajectory& initial, const std::map<std::size_t, std::size_t>& kf_of,
    TimestampNs tol) {
  std::vector<std::pair<std::size_t, const Observation*>> out;
  for (const auto& o : obs) {
    const auto idx = initial.nearest_index(o.image_id, tol);
    if (!idx) continue;
    auto it = kf_of.find(*idx);
    if (it != kf_of.end()) out.emplace_back(it->second, &o);
  }
  return out;
}

std::optional<Vec3> initial_point(std::span<const std::pair<std::size_t, const Observation*>> obs,
                                  const Trajectory& initial, const RigCalibration& rig, const FusionConfig& cfg) {
  std::vector<Observation> copy;
  for (const auto& [k, o] : obs) copy.push_back(*o);
  TriangulationOptions opt;
  opt.threshold_px = cfg.init_threshold_px;
  opt.pose_tolerance_ns = cfg.pose_tolerance_ns;
  try {
    return triangulate_ransac(copy, initial, rig, opt).point;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

FusionProblem build_fusion_problem(const FusionInput& in, const FusionConfig& config) {
  check_config(config);
  if (in.initial.empty()) throw Error(ErrorCode::kInvalidArgument, "fusion needs a non-empty initial trajectory");
  in.rig.validate();

  FusionProblem fp;
  fp.config = config;
  fp.imu_from_device = in.rig.imu_from_device;
  const RigidPose device_from_imu = in.rig.imu_from_device.inverse();
  Problem& problem = fp.problem;

  std::map<std::size_t, std::size_t> kf_of;  // trajectory index -> keyframe index
  std::vector<TimestampNs> stamps;
  std::vector<RigidPose> world_from_imu;
  for (std::size_t i = 0; i < in.initial.size(); i += config.keyframe_stride) {
    kf_of[i] = stamps.size();
    stamps.push_back(in.initial[i].timestamp_ns);
    world_from_imu.push_back(in.initial[i].pose * device_from_imu);
  }
  const std::size_t n = stamps.size();

  const auto holes = imu_holes(in.imu, stamps);
  if (!holes.empty()) {
    std::ostringstream msg;
    msg << "IMU missing for " << holes.size() << " keyframe interval(s):";
    for (const auto& [a, b] : holes) msg << " [" << a << ", " << b << "]";
    throw Error(ErrorCode::kMissingImu, msg.str());
  }

  for (std::size_t k = 0; k < n; ++k) {
    Vec3 v = Vec3::Zero();
    if (n > 1) {
      const std::size_t a = k == 0 ? 0 : k - 1;
      const std::size_t b = k + 1 == n ? n - 1 : k + 1;
      v = (world_from_imu[b].translation() - world_from_imu[a].translation()) /
          (static_cast<double>(stamps[b] - stamps[a]) * 1e-9);
    }
    KeyframeBlocks kb;
    kb.timestamp_ns = stamps[k];
    kb.pose = problem.add_pose(world_from_imu[k]);
    kb.velocity = problem.add_vec3(v);
    const auto b = config.initial_bias.vector();
    kb.bias = problem.add_euclidean(std::span<const double>(b.data(), 6));
    fp.keyframes.push_back(kb);
  }

  for (std::size_t k = 0; k + 1 < n; ++k) {
    auto seg = std::make_shared<PreintegratedSegment>(
        preintegrate_between(in.imu, stamps[k], stamps[k + 1], config.initial_bias, in.rig.imu_noise));
    const Mat9 cov = seg->covariance;
    const double dt = seg->delta_t;
    const auto& a = fp.keyframes[k];
    const auto& b = fp.keyframes[k + 1];
    problem.add_residual_block(ResidualGroup::kImuPreintegration,
                               std::make_shared<ImuPreintegrationCost>(std::move(seg), config.gravity),
                               {a.pose, a.velocity, a.bias, b.pose, b.velocity}, cov);
    problem.add_residual_block(ResidualGroup::kBiasWalk, std::make_shared<BiasWalkCost>(), {a.bias, b.bias},
                               bias_walk_covariance(in.rig.imu_noise, dt));
  }
  {
    Eigen::VectorXd sig(6);
    sig << Vec3::Constant(config.bias_prior_gyro), Vec3::Constant(config.bias_prior_accel);
    problem.add_residual_block(ResidualGroup::kGeneric,
                               std::make_shared<ComponentPriorCost>(config.initial_bias.vector(), 0, 0, 6),
                               {fp.keyframes[0].bias}, Eigen::MatrixXd(sig.cwiseAbs2().asDiagonal()));
  }

  auto camera_from_imu = [&](const std::string& id) {
    return in.rig.camera(id).camera_from_device * device_from_imu;
  };
  const RobustLoss huber = RobustLoss::huber(config.reprojection_huber);

  int world_constraints = 0, world_3d = 0;
  if (config.use_control_points) {
    for (const auto& cp : in.control_points) {
      auto det = in.cp_detections.find(cp.id);
      if (det == in.cp_detections.end()) continue;
      const auto obs = keyframe_observations(det->second, in.initial, kf_of, config.pose_tolerance_ns);
      if (obs.size() < 2) continue;
      const auto p0 = initial_point(obs, in.initial, in.rig, config);
      if (!p0) continue;
      const BlockId proxy = problem.add_vec3(*p0);
      fp.cp_proxies[cp.id] = proxy;
      for (const auto& [k, o] : obs) {
        problem.add_residual_block(
            ResidualGroup::kMarkerReprojection,
            std::make_shared<PoseReprojectionCost>(in.rig.camera(o->camera_id).model, camera_from_imu(o->camera_id),
                                                   o->pixel),
            {fp.keyframes[k].pose, proxy}, o->covariance, huber);
      }
      problem.add_residual_block(ResidualGroup::kCpWorld, std::make_shared<WorldPointCost>(cp.position, !cp.is_3d()),
                                 {proxy}, cp.measurement_covariance() * config.cp_deflation);
      ++world_constraints;
      if (cp.is_3d()) ++world_3d;
    }
  }

  if (config.mode == FusionMode::kFull) {
    for (const auto& track : in.tracks) {
      const auto obs = keyframe_observations(track.observations, in.initial, kf_of, config.pose_tolerance_ns);
      std::optional<Vec3> p0;
      if (obs.size() >= 2) p0 = initial_point(obs, in.initial, in.rig, config);
      if (!p0) {
        fp.dropped_tracks.push_back(std::to_string(track.track_id));
        continue;
      }
      const BlockId lm = problem.add_vec3(*p0);
      fp.landmarks.push_back(lm);
      for (const auto& [k, o] : obs) {
        problem.add_residual_block(
            ResidualGroup::kFeatureReprojection,
            std::make_shared<PoseReprojectionCost>(in.rig.camera(o->camera_id).model, camera_from_imu(o->camera_id),
                                                   o->pixel),
            {fp.keyframes[k].pose, lm}, o->covariance, huber);
      }
    }
  }

  if (world_constraints < 2) {
    const double s2 = config.pose_prior_sigma * config.pose_prior_sigma;
    problem.add_residual_block(ResidualGroup::kGeneric, std::make_shared<PosePriorCost>(world_from_imu[0]),
                               {fp.keyframes[0].pose}, Eigen::MatrixXd(Mat6::Identity() * s2));
    fp.pose_prior = true;
  } else if (world_3d == 0) {
    Eigen::VectorXd z(1);
    z[0] = world_from_imu[0].translation().z();
    problem.add_residual_block(ResidualGroup::kGeneric, std::make_shared<ComponentPriorCost>(z, 6, 5, 6),
                               {fp.keyframes[0].pose},
                               Eigen::MatrixXd::Constant(1, 1, config.height_prior_sigma * config.height_prior_sigma));
    fp.height_prior = true;
  }
  return fp;
}

std::vector<Mat6> pose_covariances(const FusionProblem& fp) {
  std::vector<BlockId> blocks;
  for (const auto& kf : fp.keyframes) blocks.push_back(kf.pose);
  const auto raw = marginal_covariances(fp.problem, blocks);
  const RigidPose imu_from_device = fp.imu_from_device;
  const Mat3 r_id = imu_from_device.rotation().matrix();
  std::vector<Mat6> out;
  out.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    // Device pose = IMU pose * imu_from_device; map the tangent accordingly.
    const Mat3 r_wi = fp.problem.pose(fp.keyframes[k].pose).rotation().matrix();
    Mat6 j = Mat6::Zero();
    j.topLeftCorner<3, 3>() = r_id.transpose();
    j.bottomLeftCorner<3, 3>() = -r_wi * hat(imu_from_device.translation());
    j.bottomRightCorner<3, 3>() = Mat3::Identity();
    out.push_back(j * raw[k] * j.transpose());
  }
  return out;
}

double median_position_uncertainty(std::span<const Mat6> covariances) {
  if (covariances.empty()) return 0.0;
  std::vector<double> u;
  for (const auto& c : covariances) u.push_back(sqrt_spectral_norm(c.bottomRightCorner<3, 3>()));
  std::sort(u.begin(), u.end());
  const std::size_t m = u.size() / 2;
  return u.size() % 2 ? u[m] : 0.5 * (u[m - 1] + u[m]);
}

FamilyResiduals whitened_residuals(const SolveReport& report) {
  auto cat = [&](std::initializer_list<ResidualGroup> groups) {
    Eigen::Index n = 0;
    for (auto g : groups) n += report.group(g).whitened.size();
    Eigen::VectorXd v(n);
    Eigen::Index at = 0;
    for (auto g : groups) {
      const auto& w = report.group(g).whitened;
      v.segment(at, w.size()) = w;
      at += w.size();
    }
    return v;
  };
  return {cat({ResidualGroup::kFeatureReprojection, ResidualGroup::kMarkerReprojection}),
          cat({ResidualGroup::kImuPreintegration})};
}

PseudoGT optimize_pseudo_gt(FusionProblem& fp) {
  PseudoGT out;
  out.cumulative_variance_factor.fill(1.0);
  const ResidualGroup visual[2] = {ResidualGroup::kFeatureReprojection, ResidualGroup::kMarkerReprojection};
  auto run = [&](int round) {
    try {
      return solve(fp.problem, fp.config.solver);
    } catch (const Error& e) {
      throw Error(e.code(), "fusion round " + std::to_string(round) + ": " + e.what());
    }
  };
  for (int round = 0; round < fp.config.rounds; ++round) {
    const SolveReport report = run(round);
    std::array<double, kNumResidualGroups> factors;
    factors.fill(1.0);
    for (auto g : visual) {
      const auto& gr = report.group(g);
      if (!gr.present || gr.redundancy <= 0) continue;
      const double raw = variance_factor(report, g);
      if (std::isnan(raw)) continue;
      const double f = std::clamp(raw, fp.config.min_variance_factor, fp.config.max_variance_factor);
      fp.problem.scale_group_covariance(g, f);
      factors[static_cast<int>(g)] = f;
      out.cumulative_variance_factor[static_cast<int>(g)] *= f;
    }
    out.variance_factor_history.push_back(factors);
  }
  out.report = run(fp.config.rounds);

  std::vector<StampedPose> poses;
  for (const auto& kf : fp.keyframes) {
    poses.push_back({kf.timestamp_ns, fp.problem.pose(kf.pose) * fp.imu_from_device});
    out.velocities.push_back(fp.problem.vec3(kf.velocity));
    Eigen::Matrix<double, 6, 1> b;
    const auto vals = fp.problem.values(kf.bias);
    for (int i = 0; i < 6; ++i) b[i] = vals[i];
    out.biases.push_back(Bias::from_vector(b));
  }
  out.trajectory = Trajectory(std::move(poses));
  out.pose_covariances = pose_covariances(fp);
  out.median_position_uncertainty = median_position_uncertainty(out.pose_covariances);
  for (int g = 0; g < kNumResidualGroups; ++g) out.whitened[g] = out.report.groups[g].whitened;
  return out;
}

PseudoGT fuse(const FusionInput& input, const FusionConfig& config) {
  FusionProblem fp = build_fusion_problem(input, config);
  return optimize_pseudo_gt(fp);
}

PseudoGT inertial_only_optimize(const FusionInput& input, FusionConfig config) {
  std::size_t detections = 0;
  for (const auto& [id, obs] : input.cp_detections) detections += obs.size();
  if (input.control_points.empty() || detections == 0) {
    throw Error(ErrorCode::kUnobservable, "inertial-only optimization needs control-point detections");
  }
  config.mode = FusionMode::kInertialOnly;
  config.use_control_points = true;
  FusionProblem fp = build_fusion_problem(input, config);
  if (fp.cp_proxies.empty()) {
    throw Error(ErrorCode::kUnobservable, "no control point is observed from two keyframes");
  }
  return optimize_pseudo_gt(fp);
}

}  // namespace cpgt
