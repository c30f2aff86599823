#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "cpgt/error.hpp"
#include "cpgt/triangulation.hpp"
#include "test_support.hpp"

using namespace cpgt;
using namespace cpgt::testing;

namespace {

const Vec3 kPoint(0, 0, 5);

Trajectory orthogonal_pair() {
  return trajectory_of({looking_at(Vec3(0, 0, 0), kPoint, Vec3::UnitY()), looking_at(Vec3(5, 0, 5), kPoint)});
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(TriangulateRansac, OrthogonalNoiselessViews) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  const auto obs = observe(kPoint, traj, rig);
  const RansacResult r = triangulate_ransac(obs, traj, rig);
  EXPECT_LT((r.point - kPoint).norm(), 1e-9);
  EXPECT_EQ(r.inliers.size(), 2u);
}

TEST(TriangulateRansac, OutlierIsExcluded) {
  const auto rig = pinhole_rig();
  const auto traj = trajectory_of({looking_at(Vec3(0, 0, 0), kPoint, Vec3::UnitY()), looking_at(Vec3(5, 0, 5), kPoint),
                                   looking_at(Vec3(-4, 3, 5), kPoint)});
  auto obs = observe(kPoint, traj, rig);
  obs[2].pixel += Vec2(50, 0);
  const RansacResult r = triangulate_ransac(obs, traj, rig);
  EXPECT_LT((r.point - kPoint).norm(), 1e-6);
  EXPECT_EQ(r.inliers, (std::vector<std::size_t>{0, 1}));
}

TEST(TriangulateRansac, ZeroBaselineIsDegenerate) {
  const auto rig = pinhole_rig();
  const RigidPose p = looking_at(Vec3(0, 0, 0), kPoint, Vec3::UnitY());
  const auto traj = trajectory_of({p, p});
  const auto obs = observe(kPoint, traj, rig);
  EXPECT_EQ(code_of([&] { triangulate_ransac(obs, traj, rig); }), ErrorCode::kDegenerateGeometry);
}

TEST(TriangulateRansac, SingleObservationIsInsufficient) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  auto obs = observe(kPoint, traj, rig);
  obs.pop_back();
  EXPECT_EQ(code_of([&] { triangulate_ransac(obs, traj, rig); }), ErrorCode::kInsufficientObservations);
}

TEST(TriangulateRansac, NoConsensus) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  auto obs = observe(kPoint, traj, rig);
  obs[1].pixel += Vec2(80, 0);  // both views see world y; the rays no longer meet
  TriangulationOptions o;
  o.threshold_px = 0.5;
  EXPECT_EQ(code_of([&] { triangulate_ransac(obs, traj, rig, o); }), ErrorCode::kNoConsensus);
}

TEST(TriangulateRansac, DeterministicForSeed) {
  const auto rig = pinhole_rig();
  std::vector<RigidPose> poses;
  for (int i = 0; i < 8; ++i) poses.push_back(looking_at(Vec3(i - 4.0, -6, 1), Vec3(0, 0, 0)));
  const auto traj = trajectory_of(poses);
  auto obs = observe(Vec3(0.2, 0.1, 0.3), traj, rig);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& o : obs) o.pixel += Vec2(n(rng), n(rng));
  obs[3].pixel += Vec2(40, -30);
  const auto a = triangulate_ransac(obs, traj, rig);
  const auto b = triangulate_ransac(obs, traj, rig);
  EXPECT_EQ(a.point, b.point);
  EXPECT_EQ(a.inliers, b.inliers);
}

TEST(RefineTriangulation, NoiselessStaysPut) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  const auto obs = observe(kPoint, traj, rig);
  const std::vector<std::size_t> inliers{0, 1};
  const TriangulatedCP cp = refine_triangulation(kPoint, obs, inliers, traj, rig);
  EXPECT_LT((cp.position - kPoint).norm(), 1e-9);
  EXPECT_LT(cp.mean_reprojection_error_px, 1e-6);
}

TEST(RefineTriangulation, SingleInlierIsInsufficient) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  const auto obs = observe(kPoint, traj, rig);
  const std::vector<std::size_t> inliers{0};
  EXPECT_EQ(code_of([&] { refine_triangulation(kPoint, obs, inliers, traj, rig); }),
            ErrorCode::kInsufficientObservations);
}

TEST(RefineTriangulation, NeverIncreasesCost) {
  const auto rig = pinhole_rig();
  std::vector<RigidPose> poses;
  for (int i = 0; i < 6; ++i) poses.push_back(looking_at(Vec3(2.0 * i - 5, -8, 2), Vec3(0, 0, 0)));
  const auto traj = trajectory_of(poses);
  auto obs = observe(Vec3::Zero(), traj, rig);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  for (auto& o : obs) o.pixel += Vec2(n(rng), n(rng));
  const auto r = triangulate_ransac(obs, traj, rig);
  const auto cp = refine_triangulation(r.point, obs, r.inliers, traj, rig);
  const double before = triangulation_cost(r.point, obs, r.inliers, traj, rig, 10'000'000);
  const double after = triangulation_cost(cp.position, obs, r.inliers, traj, rig, 10'000'000);
  EXPECT_LE(after, before + 1e-12);
}

TEST(RefineTriangulation, MonteCarloWithinPredictedBound) {
  const auto rig = pinhole_rig();
  const Vec3 truth(0.5, -0.3, 0.8);
  std::vector<RigidPose> poses;
  for (int i = 0; i < 10; ++i) {
    const double a = -0.6 + 0.12 * i;
    poses.push_back(looking_at(Vec3(10 * std::sin(a), -10 * std::cos(a), 1.5), truth));
  }
  const auto traj = trajectory_of(poses);
  const auto clean = observe(truth, traj, rig);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  int within = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    auto obs = clean;
    for (auto& o : obs) o.pixel += Vec2(n(rng), n(rng));
    const TriangulatedCP cp = triangulate_control_point("p", obs, traj, rig);
    const double bound = 3.0 * std::sqrt(Eigen::SelfAdjointEigenSolver<Mat3>(cp.covariance).eigenvalues().maxCoeff());
    if ((cp.position - truth).norm() <= bound) ++within;
  }
  EXPECT_GE(within, static_cast<int>(0.95 * trials));
}

TEST(TriangulationCovariance, OrthogonalViewsClosedForm) {
  const double f = 400.0, d = 5.0, sigma = 1.5;
  const auto rig = pinhole_rig(f);
  const auto traj = orthogonal_pair();
  const auto obs = observe(kPoint, traj, rig, sigma);
  const TriangulatedCP cp = triangulate_control_point("p", obs, traj, rig);
  const double v = sigma * sigma * d * d / (f * f);
  EXPECT_NEAR(cp.covariance(0, 0), v, 0.01 * v);
  EXPECT_NEAR(cp.covariance(1, 1), v / 2, 0.01 * v / 2);
  EXPECT_NEAR(cp.covariance(2, 2), v, 0.01 * v);
}

TEST(TriangulationCovariance, QuadraticInPixelSigma) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  const auto a = triangulate_control_point("p", observe(kPoint, traj, rig, 1.0), traj, rig);
  const auto b = triangulate_control_point("p", observe(kPoint, traj, rig, 2.0), traj, rig);
  EXPECT_LT((b.covariance - 4.0 * a.covariance).norm(), 1e-12 * b.covariance.norm());
}

TEST(TriangulationCovariance, NearParallelRaysElongateAlongRay) {
  const auto rig = pinhole_rig();
  const double d = 5.0;
  const double baseline = d * std::tan(0.6 * M_PI / 180.0);
  const auto traj = trajectory_of({looking_at(Vec3(0, 0, 0), kPoint, Vec3::UnitY()),
                                   looking_at(Vec3(baseline, 0, 0), kPoint, Vec3::UnitY())});
  const auto cp = triangulate_control_point("p", observe(kPoint, traj, rig), traj, rig);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cp.covariance);
  EXPECT_GT(es.eigenvalues()[2] / es.eigenvalues()[0], 1e3);
  const Vec3 ray = (kPoint - Vec3(baseline / 2, 0, 0)).normalized();
  EXPECT_GT(std::abs(es.eigenvectors().col(2).dot(ray)), 0.99);
}

TEST(Triangulation, RigidEquivariance) {
  const auto rig = pinhole_rig();
  std::vector<RigidPose> poses;
  for (int i = 0; i < 5; ++i) poses.push_back(looking_at(Vec3(i * 1.5 - 3, -7, 1), Vec3(0.1, 0.2, 0.3)));
  const auto traj = trajectory_of(poses);
  auto obs = observe(Vec3(0.1, 0.2, 0.3), traj, rig);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& o : obs) o.pixel += Vec2(n(rng), n(rng));
  const RigidPose g(Rotation::exp(Vec3(0.3, -0.7, 1.2)), Vec3(10, -4, 2));
  std::vector<RigidPose> moved;
  for (const auto& p : poses) moved.push_back(g * p);
  const auto traj_g = trajectory_of(moved);
  const auto a = triangulate_control_point("p", obs, traj, rig);
  const auto b = triangulate_control_point("p", obs, traj_g, rig);
  EXPECT_LT((b.position - g * a.position).norm(), 1e-9);
  const Mat3 r = g.rotation().matrix();
  EXPECT_LT((b.covariance - r * a.covariance * r.transpose()).norm(), 1e-9 * a.covariance.norm());
}

TEST(ObservationCameraPose, MissingFrameIsRejected) {
  const auto rig = pinhole_rig();
  const auto traj = orthogonal_pair();
  Observation o;
  o.image_id = 5 * kSecond;
  o.camera_id = "cam";
  EXPECT_THROW(observation_camera_pose(o, traj, rig, 1000), Error);
}
