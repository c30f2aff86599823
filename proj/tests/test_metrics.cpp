#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "cpgt/error.hpp"
#include "cpgt/metrics.hpp"

using namespace cpgt;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr TimestampNs kMs = 1'000'000;

Trajectory line(int n, const Vec3& offset = Vec3::Zero(), TimestampNs start = 0) {
  std::vector<StampedPose> poses;
  for (int i = 0; i < n; ++i) {
    poses.push_back({start + i * 100 * kMs, RigidPose(Rotation(), Vec3(i, 0.3 * i * i / n, 0.1 * i) + offset)});
  }
  return Trajectory(poses);
}

}  // namespace

TEST(Score, Anchors) {
  EXPECT_EQ(score(0.05), 100.0);
  EXPECT_EQ(score(0.20), 90.0);
  EXPECT_EQ(score(0.50), 75.0);
  EXPECT_EQ(score(1.0), 60.0);
  EXPECT_EQ(score(2.0), 40.0);
  EXPECT_EQ(score(5.0), 20.0);
  EXPECT_EQ(score(10.0), 0.0);
}

TEST(Score, ClampAndInterpolate) {
  EXPECT_EQ(score(0.03), 100.0);
  EXPECT_EQ(score(0.0), 100.0);
  EXPECT_NEAR(score(0.35), 82.5, 1e-12);
  EXPECT_EQ(score(25.0), 0.0);
  EXPECT_EQ(score(kInf), 0.0);
}

TEST(Score, ContinuousAndMonotone) {
  for (const auto& [e, s] : kScoreAnchors) {
    EXPECT_NEAR(score(e - 1e-9), s, 1e-6);
    EXPECT_NEAR(score(e + 1e-9), s, 1e-6);
  }
  double prev = 100.0;
  for (double e = 0.0; e < 12.0; e += 0.001) {
    const double s = score(e);
    EXPECT_LE(s, prev);
    prev = s;
  }
}

TEST(Score, RejectsNegativeAndNan) {
  EXPECT_THROW(score(-0.1), Error);
  EXPECT_THROW(score(std::nan("")), Error);
}

TEST(SequenceScore, Examples) {
  EXPECT_EQ(sequence_score(std::vector<double>{0.0, 0.0, 0.0}), 100.0);
  EXPECT_EQ(sequence_score(std::vector<double>{0.20, 0.20}), 90.0);
  EXPECT_EQ(sequence_score(std::vector<double>{0.05, kInf}), 50.0);
  EXPECT_THROW(sequence_score(std::vector<double>{}), Error);
}

TEST(SequenceScore, PermutationInvariant) {
  std::vector<double> e{0.1, 3.0, kInf, 0.7, 0.02};
  const double a = sequence_score(e);
  std::reverse(e.begin(), e.end());
  EXPECT_DOUBLE_EQ(sequence_score(e), a);
}

TEST(CpRecall, Examples) {
  EXPECT_EQ(cp_recall(std::vector<double>{0.0, 0.0}), 100.0);
  EXPECT_EQ(cp_recall(std::vector<double>{0.5, 1.5}), 50.0);
  EXPECT_EQ(cp_recall(std::vector<double>{kInf, kInf}), 0.0);
  EXPECT_EQ(cp_recall(std::vector<double>{1.0}), 100.0);
  EXPECT_THROW(cp_recall(std::vector<double>{}), Error);
}

TEST(PoseRecall, Identical) {
  const Trajectory t = line(20);
  EXPECT_EQ(pose_recall(t, t), 100.0);
}

TEST(PoseRecall, HalfCoverage) {
  const Trajectory gt = line(20);
  std::vector<StampedPose> half(gt.poses().begin(), gt.poses().begin() + 10);
  EXPECT_EQ(pose_recall(Trajectory(half), gt), 50.0);
}

TEST(PoseRecall, HorizontalOffset) {
  EXPECT_EQ(pose_recall(line(20, Vec3(6, 0, 0)), line(20)), 0.0);
  EXPECT_EQ(pose_recall(line(20, Vec3(0, 0, 60)), line(20)), 100.0);
}

TEST(PoseRecall, MonotoneInThreshold) {
  const Trajectory gt = line(20);
  const Trajectory est = line(20, Vec3(3, 0, 0));
  EXPECT_LE(pose_recall(est, gt, 2.0), pose_recall(est, gt, 4.0));
  EXPECT_THROW(pose_recall(est, Trajectory()), Error);
}

TEST(Ate, IdenticalIsZero) {
  const Trajectory t = line(10);
  EXPECT_NEAR(ate_rmse(t, t), 0.0, 1e-12);
}

TEST(Ate, AbsorbsSimilarity) {
  const Trajectory gt = line(30);
  const Similarity g(3.2, Rotation::exp(Vec3(0.5, -0.4, 2.0)), Vec3(-100, 50, 8));
  const Trajectory est = gt.transformed(g);
  EXPECT_LT(ate_rmse(est, gt, AteAlignment::kSim3), 1e-9);
  const AteResult r = ate(est, gt);
  EXPECT_NEAR(r.gt_from_estimate.scale(), 1.0 / 3.2, 1e-9);
  EXPECT_EQ(r.pairs, 30u);
}

TEST(Ate, SingleOffsetPoseWithoutAlignment) {
  const int n = 8;
  std::vector<StampedPose> g, e;
  for (int i = 0; i < n; ++i) {
    g.push_back({i * 100 * kMs, RigidPose(Rotation(), Vec3(i, 0, 0))});
    e.push_back({i * 100 * kMs, RigidPose(Rotation(), Vec3(i, i == 3 ? 1.0 : 0.0, 0))});
  }
  EXPECT_NEAR(ate_rmse(Trajectory(e), Trajectory(g), AteAlignment::kNone), std::sqrt(1.0 / n), 1e-12);
}

TEST(Ate, Se3KeepsScale) {
  const Trajectory gt = line(30);
  const Trajectory est = gt.transformed(Similarity(2.0, Rotation(), Vec3::Zero()));
  EXPECT_GT(ate_rmse(est, gt, AteAlignment::kSe3), 1.0);
}

TEST(Ate, TooFewPairs) {
  try {
    ate(line(2), line(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientObservations);
  }
  EXPECT_THROW(ate(line(5), line(5, Vec3::Zero(), 50 * kMs)), Error);
}

TEST(AteAlignmentNames, RoundTrip) {
  for (auto a : {AteAlignment::kSim3, AteAlignment::kSe3, AteAlignment::kNone}) {
    EXPECT_EQ(ate_alignment_from_string(to_string(a)), a);
  }
  EXPECT_THROW(ate_alignment_from_string("affine"), Error);
}

TEST(ScaleGravity, Identity) {
  EXPECT_EQ(scale_error(Similarity()), 0.0);
  EXPECT_EQ(gravity_error(Similarity()), 0.0);
}

TEST(ScaleGravity, Examples) {
  EXPECT_NEAR(scale_error(Similarity(1.00222, Rotation(), Vec3::Zero())), 0.222, 1e-9);
  const Similarity tilt(1.0, Rotation::about_axis(Vec3::UnitX(), M_PI / 180.0), Vec3::Zero());
  EXPECT_NEAR(gravity_error(tilt), 1.0, 1e-9);
  const Similarity yaw(1.0, Rotation::about_axis(Vec3::UnitZ(), 1.0), Vec3::Zero());
  EXPECT_NEAR(gravity_error(yaw), 0.0, 1e-9);
}

TEST(CoverageCheck, HalfDurationRule) {
  const TimestampNs duration = 100 * kMs * 19;
  EXPECT_TRUE(coverage_check(line(20), duration));
  const Trajectory full = line(20);
  std::vector<StampedPose> part(full.poses().begin(), full.poses().begin() + 9);  // 40 %
  EXPECT_FALSE(coverage_check(Trajectory(part), duration));
  EXPECT_FALSE(coverage_check(Trajectory(), duration));
}

TEST(GroupStats, IdenticalRuns) {
  const std::vector<std::vector<double>> runs{{5, 5, 5}, {7, 7, 7}};
  const GroupStats g = group_stats(runs);
  EXPECT_EQ(g.mean, 6.0);
  EXPECT_EQ(g.std, 0.0);
}

TEST(GroupStats, SingleSequence) {
  const std::vector<std::vector<double>> runs{{1, 2, 3}};
  const GroupStats g = group_stats(runs);
  EXPECT_EQ(g.mean, 2.0);
  EXPECT_NEAR(g.std, std::sqrt(2.0 / 6.0), 1e-15);
  EXPECT_TRUE(g.single_sequence);
}

TEST(GroupStats, TwoSequencesByHand) {
  const std::vector<std::vector<double>> runs{{1, 2, 3}, {4, 6, 8}};
  const GroupStats g = group_stats(runs);
  // means 2 and 6; squared deviations 2 and 8; divisor 6 * 2 * 1
  EXPECT_EQ(g.mean, 4.0);
  EXPECT_NEAR(g.std, std::sqrt(10.0 / 12.0), 1e-15);
  EXPECT_EQ(g.sequences, 2u);
  EXPECT_EQ(g.runs, 3u);
}

TEST(GroupStats, RejectsSingleRun) {
  const std::vector<std::vector<double>> one{{1}, {2}};
  EXPECT_THROW(group_stats(one), Error);
  const std::vector<std::vector<double>> ragged{{1, 2}, {1, 2, 3}};
  EXPECT_THROW(group_stats(ragged), Error);
}
