#include "cpgt/factors.hpp"

namespace cpgt {

namespace {

template <int Rows, int Cols>
using RowMap = Eigen::Map<Eigen::Matrix<double, Rows, Cols, Cols == 1 ? Eigen::ColMajor : Eigen::RowMajor>>;

Vec3 load3(const double* p) { return Vec3(p[0], p[1], p[2]); }

}  // namespace

bool FixedPoseReprojectionCost::evaluate(const double* const* params, double* residuals,
                                         double** jacobians) const {
  const Vec3 p_cam = camera_from_frame_ * load3(params[0]);
  ProjectionJacobian jp;
  const bool want = jacobians && jacobians[0];
  auto px = try_project(camera_, p_cam, want ? &jp : nullptr);
  if (!px) return false;
  Eigen::Map<Vec2>{residuals} = *px - measured_;
  if (want) RowMap<2, 3>{jacobians[0]} = jp * camera_from_frame_.rotation().matrix();
  return true;
}

bool PoseReprojectionCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  const RigidPose world_from_body = pose_from_block(params[0]);
  const Vec3 point = load3(params[1]);
  const Mat3 rt = world_from_body.rotation().matrix().transpose();
  const Vec3 p_body = rt * (point - world_from_body.translation());
  const Vec3 p_cam = camera_from_body_ * p_body;
  const bool want = jacobians && (jacobians[0] || jacobians[1]);
  ProjectionJacobian jp;
  auto px = try_project(camera_, p_cam, want ? &jp : nullptr);
  if (!px) return false;
  Eigen::Map<Vec2>{residuals} = *px - measured_;
  if (want) {
    const Eigen::Matrix<double, 2, 3> jc = jp * camera_from_body_.rotation().matrix();
    if (jacobians[0]) {
      RowMap<2, 6> j(jacobians[0]);
      j.leftCols<3>() = jc * hat(p_body);
      j.rightCols<3>() = -jc * rt;
    }
    if (jacobians[1]) RowMap<2, 3>{jacobians[1]} = jc * rt;
  }
  return true;
}

bool SimilarityPointCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  const Similarity t = similarity_from_block(params[0]);
  const Vec3 point = load3(params[1]);
  const Mat3 r = t.rotation().matrix();
  const Vec3 mapped = t.apply(point);
  const Vec3 full = measured_ - mapped;
  const int rows = residual_dim();
  for (int i = 0; i < rows; ++i) residuals[i] = full[i];
  if (jacobians) {
    if (jacobians[0]) {
      Eigen::Matrix<double, 3, 7> j;
      j.leftCols<3>() = t.scale() * r * hat(point);
      j.middleCols<3>(3) = -Mat3::Identity();
      j.col(6) = -t.scale() * (r * point);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 7, Eigen::RowMajor>>{jacobians[0], rows, 7} = j.topRows(rows);
    }
    if (jacobians[1]) {
      const Mat3 j = -t.scale() * r;
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>{jacobians[1], rows, 3} = j.topRows(rows);
    }
  }
  return true;
}

bool WorldPointCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  const Vec3 full = measured_ - load3(params[0]);
  const int rows = residual_dim();
  for (int i = 0; i < rows; ++i) residuals[i] = full[i];
  if (jacobians && jacobians[0]) {
    const Mat3 j = -Mat3::Identity();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>{jacobians[0], rows, 3} = j.topRows(rows);
  }
  return true;
}

bool ImuPreintegrationCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  NavState si{pose_from_block(params[0]), load3(params[1])};
  NavState sj{pose_from_block(params[3]), load3(params[4])};
  Eigen::Matrix<double, 6, 1> bv;
  for (int i = 0; i < 6; ++i) bv[i] = params[2][i];
  const Bias bias = Bias::from_vector(bv);
  ImuResidualJacobians jac;
  const bool want = jacobians != nullptr;
  const Vec9 r = imu_residual(*segment_, si, sj, bias, gravity_, want ? &jac : nullptr);
  Eigen::Map<Vec9>{residuals} = r;
  if (want) {
    if (jacobians[0]) RowMap<9, 6>{jacobians[0]} = jac.pose_i;
    if (jacobians[1]) RowMap<9, 3>{jacobians[1]} = jac.velocity_i;
    if (jacobians[2]) RowMap<9, 6>{jacobians[2]} = jac.bias_i;
    if (jacobians[3]) RowMap<9, 6>{jacobians[3]} = jac.pose_j;
    if (jacobians[4]) RowMap<9, 3>{jacobians[4]} = jac.velocity_j;
  }
  return true;
}

bool BiasWalkCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  for (int i = 0; i < 6; ++i) residuals[i] = params[1][i] - params[0][i];
  if (jacobians) {
    using M6 = Eigen::Matrix<double, 6, 6>;
    if (jacobians[0]) RowMap<6, 6>{jacobians[0]} = -M6::Identity();
    if (jacobians[1]) RowMap<6, 6>{jacobians[1]} = M6::Identity();
  }
  return true;
}

bool PosePriorCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  const RigidPose pose = pose_from_block(params[0]);
  const Vec3 r_rot = (prior_.rotation().inverse() * pose.rotation()).log();
  Eigen::Map<Eigen::Matrix<double, 6, 1>> r(residuals);
  r.head<3>() = r_rot;
  r.tail<3>() = pose.translation() - prior_.translation();
  if (jacobians && jacobians[0]) {
    RowMap<6, 6> j(jacobians[0]);
    j.setZero();
    j.topLeftCorner<3, 3>() = so3_right_jacobian_inverse(r_rot);
    j.bottomRightCorner<3, 3>() = Mat3::Identity();
  }
  return true;
}

bool ComponentPriorCost::evaluate(const double* const* params, double* residuals, double** jacobians) const {
  const int n = static_cast<int>(target_.size());
  for (int i = 0; i < n; ++i) residuals[i] = params[0][offset_ + i] - target_[i];
  if (jacobians && jacobians[0]) {
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> j(jacobians[0], n,
                                                                                            tangent_size_);
    j.setZero();
    for (int i = 0; i < n; ++i) j(i, tangent_offset_ + i) = 1.0;
  }
  return true;
}

}  // namespace cpgt
