#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "cpgt/error.hpp"
#include "cpgt/factors.hpp"
#include "cpgt/inertial.hpp"
#include "cpgt/synth.hpp"
#include "imu_oracle.hpp"

using namespace cpgt;
using namespace cpgt::testing;

namespace {

ImuNoise noise() { return ImuNoise{}; }

}  // namespace

TEST(Preintegrate, ZeroMeasurements) {
  const auto s = constant_samples(Vec3::Zero(), Vec3::Zero(), 1000, 1.0);
  const auto seg = preintegrate(s, Bias(), noise());
  EXPECT_EQ(seg.delta_rotation.log().norm(), 0.0);
  EXPECT_EQ(seg.delta_velocity.norm(), 0.0);
  EXPECT_EQ(seg.delta_position.norm(), 0.0);
  EXPECT_NEAR(seg.delta_t, 1.0, 1e-12);
}

TEST(Preintegrate, ConstantSpecificForce) {
  const auto s = constant_samples(Vec3::Zero(), Vec3(1, 0, 0), 1000, 1.0);
  const auto seg = preintegrate(s, Bias(), noise());
  EXPECT_LT((seg.delta_velocity - Vec3(1, 0, 0)).norm(), 1e-6);
  EXPECT_LT((seg.delta_position - Vec3(0.5, 0, 0)).norm(), 1e-6);
}

TEST(Preintegrate, ConstantRateMatchesBruteForce) {
  const Vec3 gyro(0, 0, 1), accel(0.5, -0.2, 9.81);
  const auto seg = preintegrate(constant_samples(gyro, accel, 1000, 1.0), Bias(), noise());
  EXPECT_LT(seg.delta_rotation.angle_to(Rotation::about_axis(Vec3::UnitZ(), 1.0)), 1e-6);
  EXPECT_LT(max_delta_error(seg, brute_force(constant_samples(gyro, accel, 10000, 1.0))), 1e-5);
}

TEST(Preintegrate, FigureEightMatchesBruteForce) {
  const auto seg = preintegrate(figure_eight(1000, 12.0, 1.0), Bias(), noise());
  EXPECT_LT(max_delta_error(seg, brute_force(figure_eight(10000, 12.0, 1.0))), 1e-5);
}

TEST(Preintegrate, ConcatenationComposes) {
  const auto s = figure_eight(1000, 3.0, 1.0);
  const std::vector<ImuSample> a(s.begin(), s.begin() + 401);
  const std::vector<ImuSample> b(s.begin() + 400, s.end());
  const auto sa = preintegrate(a, Bias(), noise());
  const auto sb = preintegrate(b, Bias(), noise());
  const auto sab = preintegrate(s, Bias(), noise());
  const Mat3 ra = sa.delta_rotation.matrix();
  EXPECT_LT(sab.delta_rotation.angle_to(sa.delta_rotation * sb.delta_rotation), 1e-6);
  EXPECT_LT((sab.delta_velocity - (sa.delta_velocity + ra * sb.delta_velocity)).norm(), 1e-6);
  EXPECT_LT((sab.delta_position - (sa.delta_position + sa.delta_velocity * sb.delta_t + ra * sb.delta_position)).norm(),
            1e-6);
}

TEST(Preintegrate, CovarianceGrowsWithSamples) {
  const auto s = figure_eight(1000, 5.0, 0.5);
  double prev = 0.0;
  for (std::size_t n = 2; n <= s.size(); n += 50) {
    const std::vector<ImuSample> part(s.begin(), s.begin() + n);
    const double tr = preintegrate(part, Bias(), noise()).covariance.trace();
    EXPECT_GT(tr, prev);
    prev = tr;
  }
}

TEST(Preintegrate, RejectsBadInput) {
  const std::vector<ImuSample> one{{0, Vec3::Zero(), Vec3::Zero()}};
  EXPECT_THROW(preintegrate(one, Bias(), noise()), Error);
  const std::vector<ImuSample> back{{10, Vec3::Zero(), Vec3::Zero()}, {5, Vec3::Zero(), Vec3::Zero()}};
  EXPECT_THROW(preintegrate(back, Bias(), noise()), Error);
}

TEST(Preintegrate, GapWarning) {
  auto s = constant_samples(Vec3::Zero(), Vec3::Zero(), 1000, 0.1);
  s.erase(s.begin() + 40, s.begin() + 50);
  EXPECT_TRUE(preintegrate(s, Bias(), noise()).gap_warning);
  EXPECT_FALSE(preintegrate(constant_samples(Vec3::Zero(), Vec3::Zero(), 1000, 0.1), Bias(), noise()).gap_warning);
}

TEST(PreintegrateBetween, MissingCoverage) {
  const auto s = constant_samples(Vec3::Zero(), Vec3::Zero(), 1000, 1.0);
  try {
    preintegrate_between(s, kSec / 2, 2 * kSec, Bias(), noise());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingImu);
  }
}

TEST(PreintegrateBetween, InterpolatesBoundaries) {
  const auto s = constant_samples(Vec3::Zero(), Vec3(2, 0, 0), 1000, 1.0);
  const auto seg = preintegrate_between(s, 100'500'000, 600'500'000, Bias(), noise());
  EXPECT_NEAR(seg.delta_t, 0.5, 1e-12);
  EXPECT_NEAR(seg.delta_velocity.x(), 1.0, 1e-9);
}

TEST(BiasCorrect, ZeroChange) {
  const auto seg = preintegrate(figure_eight(1000, 7.0, 1.0), Bias(), noise());
  const auto c = bias_correct(seg, Bias());
  EXPECT_EQ(c.delta_velocity, seg.delta_velocity);
  EXPECT_EQ(c.delta_position, seg.delta_position);
  EXPECT_FALSE(c.large_correction_warning);
}

TEST(BiasCorrect, SmallGyroChangeMatchesReintegration) {
  const auto s = figure_eight(1000, 7.0, 1.0);
  const auto seg = preintegrate(s, Bias(), noise());
  Bias b;
  b.gyro = Vec3(1e-3, -1e-3, 1e-3);
  b.accel = Vec3(1e-3, 2e-3, -1e-3);
  const auto c = bias_correct(seg, b);
  const auto re = preintegrate(s, b, noise());
  EXPECT_LT(c.delta_rotation.angle_to(re.delta_rotation), 1e-6);
  EXPECT_LT((c.delta_velocity - re.delta_velocity).norm(), 1e-5);
  EXPECT_LT((c.delta_position - re.delta_position).norm(), 1e-5);
}

TEST(BiasCorrect, LargeChangeWarns) {
  const auto seg = preintegrate(figure_eight(1000, 7.0, 1.0), Bias(), noise());
  Bias b;
  b.gyro = Vec3(1, 0, 0);
  EXPECT_TRUE(bias_correct(seg, b).large_correction_warning);
}

TEST(ImuResidual, ConsistentStatesAreZero) {
  const auto seg = preintegrate(figure_eight(1000, 20.0, 1.0), Bias(), noise());
  const Vec3 g = default_gravity();
  NavState i{RigidPose(Rotation::exp(Vec3(0.1, -0.3, 2.0)), Vec3(4, 5, 6)), Vec3(1, -2, 0.5)};
  const Mat3 ri = i.pose.rotation().matrix();
  const double dt = seg.delta_t;
  NavState j;
  j.pose = RigidPose(i.pose.rotation() * seg.delta_rotation,
                     i.pose.translation() + i.velocity * dt + 0.5 * g * dt * dt + ri * seg.delta_position);
  j.velocity = i.velocity + g * dt + ri * seg.delta_velocity;
  EXPECT_LT(imu_residual(seg, i, j, Bias(), g).norm(), 1e-8);
}

TEST(ImuResidual, FreeFall) {
  const auto seg = preintegrate(constant_samples(Vec3::Zero(), Vec3::Zero(), 1000, 1.0), Bias(), noise());
  const Vec3 g = default_gravity();
  NavState i{RigidPose(Rotation(), Vec3(0, 0, 100)), Vec3(3, 0, 0)};
  NavState j{RigidPose(Rotation(), Vec3(3, 0, 100) + 0.5 * g), Vec3(3, 0, 0) + g};
  EXPECT_LT(imu_residual(seg, i, j, Bias(), g).norm(), 1e-9);
}

TEST(ImuResidual, VelocityPerturbation) {
  const auto seg = preintegrate(constant_samples(Vec3::Zero(), Vec3::Zero(), 1000, 1.0), Bias(), noise());
  const Vec3 g = default_gravity();
  const Rotation ri = Rotation::about_axis(Vec3::UnitZ(), M_PI / 2);
  NavState i{RigidPose(ri, Vec3::Zero()), Vec3::Zero()};
  NavState j{RigidPose(ri, 0.5 * g), g + Vec3(0.1, 0, 0)};
  const Vec9 r = imu_residual(seg, i, j, Bias(), g);
  // world x maps to body -y under a quarter turn about z
  EXPECT_LT((r.segment<3>(3) - Vec3(0, -0.1, 0)).norm(), 1e-12);
}

TEST(ImuResidual, JacobiansMatchFiniteDifferences) {
  auto seg = std::make_shared<PreintegratedSegment>(preintegrate(figure_eight(1000, 30.0, 0.5), Bias(), noise()));
  const ImuPreintegrationCost cost(seg, default_gravity());
  const std::vector<ManifoldKind> kinds{ManifoldKind::kRigidPose, ManifoldKind::kEuclidean, ManifoldKind::kEuclidean,
                                        ManifoldKind::kRigidPose, ManifoldKind::kEuclidean};
  const std::vector<std::vector<double>> params{
      to_block(RigidPose(Rotation::exp(Vec3(0.2, 0.1, -0.4)), Vec3(1, 2, 3))),
      {0.5, -1.0, 0.2},
      {0.01, -0.02, 0.005, 0.05, -0.03, 0.02},
      to_block(RigidPose(Rotation::exp(Vec3(0.25, 0.05, -0.1)), Vec3(1.4, 1.8, 2.9))),
      {0.7, -0.8, 0.1}};
  const auto a = analytic_jacobians(cost, kinds, params);
  const auto n = numeric_jacobians(cost, kinds, params);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_LT((a[k] - n[k]).norm(), 1e-5 * std::max(1.0, n[k].norm())) << "block " << k;
  }
}

TEST(BiasWalk, ResidualAndCovariance) {
  Bias a, b;
  b.gyro = Vec3(1, 2, 3);
  b.accel = Vec3(-1, 0, 1);
  const Vec6 r = bias_walk_residual(a, b);
  EXPECT_EQ(r.head<3>(), b.gyro);
  EXPECT_EQ(r.tail<3>(), b.accel);
  const auto c = bias_walk_covariance(noise(), 2.0);
  EXPECT_NEAR(c(0, 0), noise().gyro_random_walk * noise().gyro_random_walk * 2.0, 1e-20);
  EXPECT_NEAR(c(5, 5), noise().accel_random_walk * noise().accel_random_walk * 2.0, 1e-20);
}

TEST(ImuNoise, ValidateRejectsNonPositive) {
  ImuNoise n;
  n.gyro_noise_density = 0.0;
  EXPECT_THROW(n.validate(), Error);
}
