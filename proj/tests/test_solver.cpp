#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cpgt/error.hpp"
#include "cpgt/factors.hpp"
#include "cpgt/solver.hpp"

using namespace cpgt;

namespace {

/// r = x[index] - target
class Offset final : public CostFunction {
 public:
  Offset(double target, int size = 1, int index = 0) : target_(target), size_(size), index_(index) {}
  int residual_dim() const override { return 1; }
  bool evaluate(const double* const* p, double* r, double** j) const override {
    r[0] = p[0][index_] - target_;
    if (j && j[0]) {
      for (int k = 0; k < size_; ++k) j[0][k] = k == index_ ? 1.0 : 0.0;
    }
    return true;
  }

 private:
  double target_;
  int size_;
  int index_;
};

/// MINPACK Rosenbrock: (10 (y - x^2), 1 - x), numeric Jacobians.
class Rosenbrock final : public CostFunction {
 public:
  int residual_dim() const override { return 2; }
  bool has_analytic_jacobians() const override { return false; }
  bool evaluate(const double* const* p, double* r, double**) const override {
    r[0] = 10.0 * (p[0][1] - p[0][0] * p[0][0]);
    r[1] = 1.0 - p[0][0];
    return true;
  }
};

class Poisoned final : public CostFunction {
 public:
  int residual_dim() const override { return 1; }
  bool evaluate(const double* const*, double* r, double** j) const override {
    r[0] = std::numeric_limits<double>::quiet_NaN();
    if (j && j[0]) j[0][0] = 1.0;
    return true;
  }
};

/// Constant residual value, used to pin whitened residuals.
class Fixed final : public CostFunction {
 public:
  explicit Fixed(double v) : v_(v) {}
  int residual_dim() const override { return 1; }
  bool evaluate(const double* const*, double* r, double** j) const override {
    r[0] = v_;
    if (j && j[0]) j[0][0] = 0.0;
    return true;
  }

 private:
  double v_;
};

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

}  // namespace

TEST(Solve, LinearResidual) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(3.0), {x}, scalar(1.0));
  const SolveReport r = solve(p);
  EXPECT_NEAR(p.values(x)[0], 3.0, 1e-12);
  EXPECT_NEAR(r.final_cost, 0.0, 1e-20);
  EXPECT_GE(r.iterations, 1);
  EXPECT_LE(r.iterations, 2);
}

TEST(Solve, Rosenbrock) {
  Problem p;
  const double x0[2] = {-1.2, 1.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Rosenbrock>(), {x}, Eigen::Matrix2d::Identity());
  SolverOptions o;
  o.max_iterations = 200;
  const SolveReport r = solve(p, o);
  EXPECT_NEAR(p.values(x)[0], 1.0, 1e-6);
  EXPECT_NEAR(p.values(x)[1], 1.0, 1e-6);
  double prev = r.initial_cost;
  for (const auto& it : r.history) {
    if (!it.accepted) continue;
    EXPECT_LE(it.cost, prev);
    prev = it.cost;
  }
}

TEST(Solve, NonFiniteResidualNamesBlock) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(1.0), {x}, scalar(1.0));
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Poisoned>(), {x}, scalar(1.0));
  try {
    solve(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("residual block 1"), std::string::npos) << e.what();
  }
}

TEST(Solve, NoFreeParameters) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.set_constant(x);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(1.0), {x}, scalar(1.0));
  EXPECT_THROW(solve(p), Error);
}

TEST(Solve, ConstantBlocksDoNotMove) {
  Problem p;
  const double a0[1] = {5.0}, b0[1] = {0.0};
  const BlockId a = p.add_euclidean(a0);
  const BlockId b = p.add_euclidean(b0);
  p.set_constant(a);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(4.0), {a}, scalar(1.0));
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(2.0), {b}, scalar(1.0));
  solve(p);
  EXPECT_EQ(p.values(a)[0], 5.0);
  // the constant block's residual of 1 limits how far the cost test can resolve b
  EXPECT_NEAR(p.values(b)[0], 2.0, 1e-7);
}

TEST(Problem, RejectsIndefiniteCovariance) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  EXPECT_THROW(p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(1.0), {x}, scalar(-1.0)),
               Error);
}

TEST(MarginalCovariance, ScalarFisherInformation) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(2.0), {x}, scalar(0.3 * 0.3));
  solve(p);
  EXPECT_NEAR(marginal_covariance(p, x)(0, 0), 0.09, 1e-12);
}

TEST(MarginalCovariance, IndependentScalars) {
  Problem p;
  const double x0[2] = {0.0, 0.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(1.0, 2, 0), {x}, scalar(4.0));
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(1.0, 2, 1), {x}, scalar(0.25));
  solve(p);
  const Eigen::MatrixXd c = marginal_covariance(p, x);
  EXPECT_NEAR(c(0, 0), 4.0, 1e-12);
  EXPECT_NEAR(c(1, 1), 0.25, 1e-12);
  EXPECT_NEAR(c(0, 1), 0.0, 1e-12);
}

TEST(MarginalCovariance, TwoOrthogonalCameras) {
  const double f = 400.0, d = 5.0, sigma = 0.7;
  const CameraModel cam = CameraModel::pinhole(f, f, 320, 240, 640, 480);
  const Vec3 point(0, 0, d);
  // camera A at the origin looking along +z, camera B at (d, 0, d) looking along -x
  const RigidPose a_from_world;
  Mat3 r_wb;
  r_wb.col(0) = Vec3(0, 0, 1);
  r_wb.col(1) = Vec3(0, 1, 0);
  r_wb.col(2) = Vec3(-1, 0, 0);
  const RigidPose b_from_world = RigidPose(Rotation::from_matrix(r_wb), Vec3(d, 0, d)).inverse();

  Problem p;
  const BlockId x = p.add_vec3(point + Vec3(0.01, -0.02, 0.03));
  for (const RigidPose& c : {a_from_world, b_from_world}) {
    p.add_residual_block(ResidualGroup::kMarkerReprojection,
                         std::make_shared<FixedPoseReprojectionCost>(cam, c, project(cam, c * point)), {x},
                         Eigen::Matrix2d::Identity() * sigma * sigma);
  }
  solve(p);
  const Eigen::MatrixXd c = marginal_covariance(p, x);
  // A constrains x and y, B constrains z and y, each with information (f / (d sigma))^2.
  const double v = sigma * sigma * d * d / (f * f);
  Eigen::Matrix3d oracle = Eigen::Vector3d(v, v / 2, v).asDiagonal();
  EXPECT_LT((c - oracle).norm(), 1e-9 * v);
}

TEST(MarginalCovariance, GaugeFreedomIsRankDeficient) {
  Problem p;
  const double x0[2] = {0.0, 0.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Offset>(1.0, 2, 0), {x}, scalar(1.0));
  solve(p);
  try {
    marginal_covariance(p, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankDeficient);
    EXPECT_NE(std::string(e.what()).find("dimension 1"), std::string::npos) << e.what();
  }
}

TEST(MarginalCovariance, PriorPassthrough) {
  Problem p;
  const BlockId x = p.add_pose(RigidPose(Rotation::exp(Vec3(0.1, 0.2, 0.3)), Vec3(1, 2, 3)));
  Mat6 cov = Mat6::Identity();
  cov.diagonal() << 0.01, 0.02, 0.03, 0.4, 0.5, 0.6;
  p.add_residual_block(ResidualGroup::kGeneric,
                       std::make_shared<PosePriorCost>(RigidPose(Rotation::exp(Vec3(0.1, 0.2, 0.3)), Vec3(1, 2, 3))),
                       {x}, cov);
  solve(p);
  EXPECT_LT((marginal_covariance(p, x) - cov).norm(), 1e-9);
}

TEST(VarianceFactor, UnitResiduals) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.set_constant(x);
  for (int i = 0; i < 10; ++i) {
    p.add_residual_block(ResidualGroup::kFeatureReprojection, std::make_shared<Fixed>(i % 2 ? 1.0 : -1.0), {x},
                         scalar(1.0));
  }
  SolveReport r;
  r.groups = collect_group_residuals(p);
  EXPECT_EQ(r.group(ResidualGroup::kFeatureReprojection).redundancy, 10);
  EXPECT_DOUBLE_EQ(variance_factor(r, ResidualGroup::kFeatureReprojection), 1.0);
}

TEST(VarianceFactor, QuadraticScaling) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.set_constant(x);
  for (int i = 0; i < 10; ++i) {
    p.add_residual_block(ResidualGroup::kFeatureReprojection, std::make_shared<Fixed>(i % 2 ? 2.0 : -2.0), {x},
                         scalar(1.0));
  }
  SolveReport r;
  r.groups = collect_group_residuals(p);
  EXPECT_DOUBLE_EQ(variance_factor(r, ResidualGroup::kFeatureReprojection), 4.0);
}

TEST(VarianceFactor, MonteCarloMisweightedNoise) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  for (int i = 0; i < 10000; ++i) {
    p.add_residual_block(ResidualGroup::kFeatureReprojection, std::make_shared<Offset>(n(rng)), {x}, scalar(1.0));
  }
  const SolveReport r = solve(p);
  EXPECT_EQ(r.group(ResidualGroup::kFeatureReprojection).redundancy, 9999);
  EXPECT_NEAR(variance_factor(r, ResidualGroup::kFeatureReprojection), 4.0, 0.4);
}

TEST(VarianceFactor, NoRedundancyIsAnError) {
  Problem p;
  const double x0[1] = {0.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kFeatureReprojection, std::make_shared<Offset>(1.0), {x}, scalar(1.0));
  const SolveReport r = solve(p);
  EXPECT_THROW(variance_factor(r, ResidualGroup::kFeatureReprojection), Error);
  EXPECT_THROW(variance_factor(r, ResidualGroup::kImuPreintegration), Error);
}

TEST(Whitening, InvariantUnderJointRescaling) {
  const CameraModel cam = CameraModel::pinhole(400, 400, 320, 240, 640, 480);
  auto build = [&](double k) {
    Problem p;
    const BlockId x = p.add_vec3(Vec3(0.1, 0.2, 4.0));
    p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<WorldPointCost>(Vec3(0.3, 0.1, 4.2) * k, false),
                         {x}, Eigen::Matrix3d::Identity() * 0.04 * k * k);
    p.mutable_values(x)[0] *= k;
    p.mutable_values(x)[1] *= k;
    p.mutable_values(x)[2] *= k;
    return p.whitened_residual(ResidualId{0});
  };
  EXPECT_LT((build(1.0) - build(7.0)).norm(), 1e-10);
}

TEST(RobustLoss, HuberIsQuadraticInside) {
  const RobustLoss h = RobustLoss::huber(2.0);
  EXPECT_DOUBLE_EQ(h.rho(3.0), 3.0);
  EXPECT_DOUBLE_EQ(h.rho_prime(3.0), 1.0);
  EXPECT_NEAR(h.rho(16.0), 2.0 * 2.0 * 4.0 - 4.0, 1e-12);
  EXPECT_LT(h.rho_prime(16.0), 1.0);
}

TEST(Diagnostics, CsvHasOneRowPerIteration) {
  Problem p;
  const double x0[2] = {-1.2, 1.0};
  const BlockId x = p.add_euclidean(x0);
  p.add_residual_block(ResidualGroup::kGeneric, std::make_shared<Rosenbrock>(), {x}, Eigen::Matrix2d::Identity());
  const SolveReport r = solve(p);
  std::ostringstream out;
  write_diagnostics_csv(r, out);
  const std::string s = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), r.history.size() + 1);
}
