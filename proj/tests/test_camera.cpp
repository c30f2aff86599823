#include <cmath>

#include <gtest/gtest.h>

#include "cpgt/camera.hpp"
#include "cpgt/error.hpp"

using namespace cpgt;

namespace {

CameraModel radtan() {
  CameraModel c = CameraModel::pinhole(450, 451, 320, 240, 640, 480);
  c.kind = CameraKind::kPinholeRadtan4;
  c.distortion = {-0.12, 0.03, 4e-4, -2e-4};
  return c;
}

CameraModel fisheye() {
  CameraModel c = CameraModel::pinhole(300, 300.5, 319.5, 239.5, 640, 480);
  c.kind = CameraKind::kKannalaBrandt4;
  c.distortion = {0.02, -0.005, 0.001, -0.0002};
  return c;
}

double grid_round_trip(const CameraModel& cam) {
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const Vec2 px(5.0 + i * (cam.width - 10.0) / 9.0, 5.0 + j * (cam.height - 10.0) / 9.0);
      const Vec3 ray = unproject(cam, px);
      worst = std::max(worst, (project(cam, ray * 3.7) - px).norm());
    }
  }
  return worst;
}

}  // namespace

TEST(Project, PinholeOpticalAxis) {
  const auto cam = CameraModel::pinhole(100, 100, 0, 0, 640, 480);
  EXPECT_EQ(project(cam, Vec3(0, 0, 1)), Vec2(0, 0));
}

TEST(Project, PinholeSimilarTriangles) {
  const auto cam = CameraModel::pinhole(100, 100, 0, 0, 640, 480);
  EXPECT_TRUE(project(cam, Vec3(1, 0, 2)).isApprox(Vec2(50, 0)));
}

TEST(Project, PinholeBehindCamera) {
  const auto cam = CameraModel::pinhole(100, 100, 0, 0, 640, 480);
  try {
    project(cam, Vec3(0, 0, -1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
  EXPECT_FALSE(try_project(cam, Vec3(1, 0, 0)).has_value());
}

TEST(Project, FisheyeSeesBeyondNinetyDegrees) {
  const auto cam = fisheye();
  EXPECT_TRUE(try_project(cam, Vec3(1, 0, -0.05)).has_value());
}

TEST(Project, AnalyticJacobianMatchesDifferences) {
  for (const auto& cam : {CameraModel::pinhole(300, 310, 320, 240, 640, 480), radtan(), fisheye()}) {
    const Vec3 p(0.3, -0.2, 1.7);
    ProjectionJacobian j;
    ASSERT_TRUE(try_project(cam, p, &j).has_value());
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d[k] = 1e-6;
      const Vec2 fd = (project(cam, p + d) - project(cam, p - d)) / 2e-6;
      EXPECT_LT((fd - j.col(k)).norm(), 1e-5 * std::max(1.0, fd.norm())) << to_string(cam.kind);
    }
  }
}

TEST(Unproject, PinholePrincipalPoint) {
  const auto cam = CameraModel::pinhole(100, 100, 20, 30, 640, 480);
  EXPECT_LT((unproject(cam, Vec2(20, 30)) - Vec3(0, 0, 1)).norm(), 1e-15);
}

TEST(Unproject, PinholeOffAxis) {
  const auto cam = CameraModel::pinhole(100, 100, 0, 0, 640, 480);
  EXPECT_LT((unproject(cam, Vec2(100, 0)) - Vec3(1, 0, 1).normalized()).norm(), 1e-15);
}

TEST(Unproject, OutsideImageIsRejected) {
  const auto cam = CameraModel::pinhole(100, 100, 320, 240, 640, 480);
  EXPECT_THROW(unproject(cam, Vec2(-5, 10)), Error);
}

TEST(RoundTrip, GridEveryModel) {
  EXPECT_LT(grid_round_trip(CameraModel::pinhole(300, 310, 320, 240, 640, 480)), 1e-6);
  EXPECT_LT(grid_round_trip(radtan()), 1e-6);
  EXPECT_LT(grid_round_trip(fisheye()), 1e-6);
}

TEST(UndistortPoints, SameModelIsIdentity) {
  const auto cam = CameraModel::pinhole(300, 310, 320, 240, 640, 480);
  const std::vector<Vec2> pts{{10, 20}, {320, 240}, {600, 470}};
  const auto out = undistort_points(cam, cam, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ASSERT_TRUE(out[i].has_value());
    EXPECT_LT((*out[i] - pts[i]).norm(), 1e-9);
  }
}

TEST(UndistortPoints, FisheyeToPinholeRedistorts) {
  const auto src = fisheye();
  const auto dst = CameraModel::pinhole(250, 250, 320, 240, 640, 480);
  std::vector<Vec2> pts;
  for (int i = 0; i < 5; ++i) pts.emplace_back(220 + 50 * i, 160 + 40 * i);
  const auto out = undistort_points(src, dst, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ASSERT_TRUE(out[i].has_value());
    const Vec3 ray = unproject(dst, *out[i]);
    EXPECT_LT((project(src, ray) - pts[i]).norm(), 1e-5);
  }
}

TEST(UndistortPoints, WideRayIsUnmappable) {
  const auto src = fisheye();
  const auto dst = CameraModel::pinhole(600, 600, 320, 240, 640, 480);
  // ray 95 degrees off axis
  const Vec2 px = project(src, Vec3(std::sin(95.0 * M_PI / 180), 0, std::cos(95.0 * M_PI / 180)));
  const std::vector<Vec2> pts{px};
  const auto out = undistort_points(src, dst, pts);
  EXPECT_FALSE(out[0].has_value());
}

TEST(CameraModel, ValidateRejectsBadFocal) {
  auto cam = CameraModel::pinhole(0, 100, 0, 0, 640, 480);
  EXPECT_THROW(cam.validate(), Error);
}

TEST(CameraKind, NamesRoundTrip) {
  for (auto k : {CameraKind::kPinhole, CameraKind::kPinholeRadtan4, CameraKind::kKannalaBrandt4}) {
    EXPECT_EQ(camera_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(camera_kind_from_string("fov"), Error);
}
