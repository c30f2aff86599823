#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "cpgt/error.hpp"
#include "cpgt/fusion.hpp"
#include "cpgt/synth.hpp"

using namespace cpgt;

namespace {

struct Fixture {
  SynthWorld world;
  FusionInput input;
};

Fixture make_fixture(double duration_s = 20.0, bool perturb = true) {
  SynthConfig c;
  c.duration_s = duration_s;
  c.landmark_count = 60;
  Fixture f;
  f.world = gen_world(c);
  const SynthDetections d = gen_detections(f.world);
  PerturbationModel pm;
  if (perturb) {
    pm.seed = 7;
    pm.white_sigma_pos = 0.1;
    pm.white_sigma_rot = M_PI / 180.0;
  }
  f.input.initial = perturb_trajectory(f.world.trajectory, pm);
  f.input.tracks = d.tracks;
  f.input.cp_detections = d.control_points;
  f.input.control_points = f.world.control_points;
  f.input.imu = gen_imu(f.world);
  f.input.rig = f.world.rig;
  return f;
}

double max_keyframe_error(const PseudoGT& gt, const Trajectory& truth) {
  double worst = 0.0;
  for (const auto& sp : gt.trajectory.poses()) {
    worst = std::max(worst, (truth.lookup(sp.timestamp_ns, 1000)->translation() - sp.pose.translation()).norm());
  }
  return worst;
}

}  // namespace

TEST(BuildFusionProblem, FactorFamilies) {
  const Fixture f = make_fixture();
  const FusionProblem fp = build_fusion_problem(f.input);
  const std::size_t k = fp.keyframes.size();
  EXPECT_EQ(k, (f.input.initial.size() + 4) / 5);
  EXPECT_EQ(fp.problem.count_residual_blocks(ResidualGroup::kImuPreintegration), k - 1);
  EXPECT_EQ(fp.problem.count_residual_blocks(ResidualGroup::kBiasWalk), k - 1);
  EXPECT_EQ(fp.problem.count_residual_blocks(ResidualGroup::kCpWorld), fp.cp_proxies.size());
  EXPECT_GE(fp.cp_proxies.size(), 2u);

  std::size_t markers = 0;
  for (const auto& [id, proxy] : fp.cp_proxies) {
    for (const auto& o : f.input.cp_detections.at(id)) {
      markers += std::any_of(fp.keyframes.begin(), fp.keyframes.end(),
                             [&](const KeyframeBlocks& kb) { return kb.timestamp_ns == o.image_id; });
    }
  }
  EXPECT_EQ(fp.problem.count_residual_blocks(ResidualGroup::kMarkerReprojection), markers);
  EXPECT_GT(fp.problem.count_residual_blocks(ResidualGroup::kFeatureReprojection), 0u);
  EXPECT_FALSE(fp.pose_prior);
}

TEST(BuildFusionProblem, InertialOnlyHasNoFeatures) {
  const Fixture f = make_fixture();
  FusionConfig c;
  c.mode = FusionMode::kInertialOnly;
  const FusionProblem fp = build_fusion_problem(f.input, c);
  EXPECT_EQ(fp.problem.count_residual_blocks(ResidualGroup::kFeatureReprojection), 0u);
  EXPECT_TRUE(fp.landmarks.empty());
  EXPECT_GT(fp.problem.count_residual_blocks(ResidualGroup::kMarkerReprojection), 0u);
}

TEST(BuildFusionProblem, MissingImuNamesInterval) {
  Fixture f = make_fixture();
  std::erase_if(f.input.imu, [](const ImuSample& s) {
    return s.timestamp_ns > 5'000'000'000 && s.timestamp_ns < 5'500'000'000;
  });
  try {
    build_fusion_problem(f.input);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingImu);
    EXPECT_NE(std::string(e.what()).find("[5000000000, 5500000000]"), std::string::npos) << e.what();
  }
}

TEST(BuildFusionProblem, NoControlPointsFixesGaugeWithPrior) {
  Fixture f = make_fixture(10.0, false);
  f.input.control_points.clear();
  const FusionProblem fp = build_fusion_problem(f.input);
  EXPECT_TRUE(fp.pose_prior);
  EXPECT_EQ(fp.problem.count_residual_blocks(ResidualGroup::kCpWorld), 0u);
}

TEST(BuildFusionProblem, RejectsBadConfig) {
  const Fixture f = make_fixture(5.0, false);
  FusionConfig c;
  c.keyframe_stride = 0;
  EXPECT_THROW(build_fusion_problem(f.input, c), Error);
  c = FusionConfig();
  c.cp_deflation = 0.0;
  EXPECT_THROW(build_fusion_problem(f.input, c), Error);
  c = FusionConfig();
  c.rounds = 0;
  EXPECT_THROW(build_fusion_problem(f.input, c), Error);
}

TEST(Fuse, NoiselessRecoveryFromPerturbedStart) {
  const Fixture f = make_fixture();
  const PseudoGT gt = fuse(f.input);
  EXPECT_TRUE(gt.report.converged());
  EXPECT_LT(max_keyframe_error(gt, f.world.trajectory), 1e-4);
  ASSERT_EQ(gt.pose_covariances.size(), gt.trajectory.size());
  EXPECT_GT(gt.median_position_uncertainty, 0.0);
  for (const auto& b : gt.biases) EXPECT_LT(b.vector().norm(), 1e-4);
}

TEST(Fuse, NoiselessWhitenedResidualsVanish) {
  const Fixture f = make_fixture(10.0, false);
  const PseudoGT gt = fuse(f.input);
  const FamilyResiduals fam = whitened_residuals(gt.report);
  ASSERT_GT(fam.visual.size(), 0);
  ASSERT_GT(fam.imu.size(), 0);
  // Sampled-IMU discretization leaves a floor far below unit noise.
  EXPECT_LT(fam.visual.lpNorm<Eigen::Infinity>(), 1e-2);
  EXPECT_LT(fam.imu.lpNorm<Eigen::Infinity>(), 1e-2);
}

TEST(Fuse, VarianceFactorClampedOnNoiselessData) {
  const Fixture f = make_fixture(10.0, false);
  const PseudoGT gt = fuse(f.input);
  ASSERT_FALSE(gt.variance_factor_history.empty());
  for (const auto& round : gt.variance_factor_history) {
    for (double v : round) {
      EXPECT_GE(v, FusionConfig().min_variance_factor);
      EXPECT_LE(v, FusionConfig().max_variance_factor);
    }
  }
}

TEST(Fuse, TighterControlPointsShrinkUncertainty) {
  const Fixture f = make_fixture(10.0, false);
  FusionConfig loose, tight;
  loose.cp_deflation = 1.0;
  tight.cp_deflation = 0.1;
  EXPECT_LT(fuse(f.input, tight).median_position_uncertainty, fuse(f.input, loose).median_position_uncertainty);
}

TEST(InertialOnly, RecoversNoiselessTrajectory) {
  const Fixture f = make_fixture();
  const PseudoGT gt = inertial_only_optimize(f.input);
  EXPECT_LT(max_keyframe_error(gt, f.world.trajectory), 1e-4);
  EXPECT_FALSE(gt.report.group(ResidualGroup::kFeatureReprojection).present);
}

TEST(InertialOnly, WithoutControlPointsIsUnobservable) {
  Fixture f = make_fixture(5.0, false);
  f.input.cp_detections.clear();
  try {
    inertial_only_optimize(f.input);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnobservable);
  }
}

TEST(FusionModeNames, RoundTrip) {
  for (auto m : {FusionMode::kFull, FusionMode::kInertialOnly}) EXPECT_EQ(fusion_mode_from_string(to_string(m)), m);
  EXPECT_THROW(fusion_mode_from_string("visual"), Error);
}
