#include "cpgt/camera.hpp"

#include <cmath>
#include <string>

#include "cpgt/error.hpp"
#include "cpgt/rig.hpp"

namespace cpgt {

namespace {

constexpr int kMaxInversionIterations = 20;
constexpr double kInversionTolerance = 1e-8;

// Kannala-Brandt polynomial theta_d(theta) and its derivative.
double kb_distort(const std::array<double, 4>& k, double theta, double* derivative) {
  const double t2 = theta * theta;
  const double t4 = t2 * t2;
  const double t6 = t4 * t2;
  const double t8 = t4 * t4;
  if (derivative) {
    *derivative = 1.0 + 3.0 * k[0] * t2 + 5.0 * k[1] * t4 + 7.0 * k[2] * t6 + 9.0 * k[3] * t8;
  }
  return theta * (1.0 + k[0] * t2 + k[1] * t4 + k[2] * t6 + k[3] * t8);
}

// Radial-tangential distortion on normalized coordinates with 2x2 Jacobian.
Vec2 radtan_distort(const std::array<double, 4>& d, const Vec2& n, Mat2* jacobian) {
  const double k1 = d[0], k2 = d[1], p1 = d[2], p2 = d[3];
  const double x = n.x(), y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
  Vec2 out(x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
           y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y);
  if (jacobian) {
    const double dradial = k1 + 2.0 * k2 * r2;  // d(radial)/d(r2)
    (*jacobian)(0, 0) = radial + x * dradial * 2.0 * x + 2.0 * p1 * y + p2 * 6.0 * x;
    (*jacobian)(0, 1) = x * dradial * 2.0 * y + 2.0 * p1 * x + p2 * 2.0 * y;
    (*jacobian)(1, 0) = y * dradial * 2.0 * x + p1 * 2.0 * x + 2.0 * p2 * y;
    (*jacobian)(1, 1) = radial + y * dradial * 2.0 * y + p1 * 6.0 * y + 2.0 * p2 * x;
  }
  return out;
}

}  // namespace

std::string_view to_string(CameraKind kind) {
  switch (kind) {
    case CameraKind::kPinhole: return "pinhole";
    case CameraKind::kPinholeRadtan4: return "pinhole-radtan4";
    case CameraKind::kKannalaBrandt4: return "kannala-brandt4";
  }
  return "unknown";
}

CameraKind camera_kind_from_string(std::string_view name) {
  if (name == "pinhole") return CameraKind::kPinhole;
  if (name == "pinhole-radtan4") return CameraKind::kPinholeRadtan4;
  if (name == "kannala-brandt4") return CameraKind::kKannalaBrandt4;
  throw Error(ErrorCode::kInvalidArgument, "unknown camera model '" + std::string(name) + "'");
}

CameraModel CameraModel::pinhole(double fx, double fy, double cx, double cy, int width, int height) {
  CameraModel cam;
  cam.kind = CameraKind::kPinhole;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  return cam;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "camera image size must be positive");
  }
}

bool CameraModel::in_image(const Vec2& px) const {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width && px.y() <= height;
}

std::optional<Vec2> try_project(const CameraModel& cam, const Vec3& p, ProjectionJacobian* jacobian) {
  switch (cam.kind) {
    case CameraKind::kPinhole:
    case CameraKind::kPinholeRadtan4: {
      if (!(p.z() > 0.0)) return std::nullopt;
      const double iz = 1.0 / p.z();
      const Vec2 n(p.x() * iz, p.y() * iz);
      Eigen::Matrix<double, 2, 3> dn_dp;
      dn_dp << iz, 0.0, -p.x() * iz * iz,
               0.0, iz, -p.y() * iz * iz;
      Vec2 d = n;
      Mat2 dd_dn = Mat2::Identity();
      if (cam.kind == CameraKind::kPinholeRadtan4) {
        d = radtan_distort(cam.distortion, n, jacobian ? &dd_dn : nullptr);
      }
      if (jacobian) {
        const Mat2 f = Eigen::Vector2d(cam.fx, cam.fy).asDiagonal();
        *jacobian = f * dd_dn * dn_dp;
      }
      return Vec2(cam.fx * d.x() + cam.cx, cam.fy * d.y() + cam.cy);
    }
    case CameraKind::kKannalaBrandt4: {
      const double r2 = p.x() * p.x() + p.y() * p.y();
      const double r = std::sqrt(r2);
      if (r == 0.0 && p.z() == 0.0) return std::nullopt;
      const double theta = std::atan2(r, p.z());
      double dtd = 0.0;
      const double td = kb_distort(cam.distortion, theta, &dtd);
      if (!(dtd > 0.0)) return std::nullopt;
      if (r < 1e-12) {
        // On the optical axis theta_d / r -> 1 / z.
        if (!(p.z() > 0.0)) return std::nullopt;
        const double iz = 1.0 / p.z();
        if (jacobian) {
          *jacobian << cam.fx * iz, 0.0, 0.0,
                       0.0, cam.fy * iz, 0.0;
        }
        return Vec2(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
      }
      const double scale = td / r;
      if (jacobian) {
        const double rho2 = r2 + p.z() * p.z();
        // d(theta)/dp and d(r)/dp
        const Eigen::RowVector3d dtheta(p.z() * p.x() / (r * rho2), p.z() * p.y() / (r * rho2), -r / rho2);
        const Eigen::RowVector3d dr(p.x() / r, p.y() / r, 0.0);
        const Eigen::RowVector3d dscale = (dtd * dtheta * r - td * dr) / r2;
        Eigen::Matrix<double, 2, 3> dxy;
        dxy.row(0) = p.x() * dscale;
        dxy.row(1) = p.y() * dscale;
        dxy(0, 0) += scale;
        dxy(1, 1) += scale;
        jacobian->row(0) = cam.fx * dxy.row(0);
        jacobian->row(1) = cam.fy * dxy.row(1);
      }
      return Vec2(cam.fx * scale * p.x() + cam.cx, cam.fy * scale * p.y() + cam.cy);
    }
  }
  return std::nullopt;
}

Vec2 project(const CameraModel& cam, const Vec3& p_cam) {
  if (cam.has_cheirality() && !(p_cam.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "point is behind the camera (z <= 0)");
  }
  auto px = try_project(cam, p_cam);
  if (!px) throw Error(ErrorCode::kOutOfModelDomain, "point outside the camera model domain");
  return *px;
}

Vec3 unproject(const CameraModel& cam, const Vec2& px) {
  if (!cam.in_image(px)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel outside image bounds");
  }
  const Vec2 d((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy);
  switch (cam.kind) {
    case CameraKind::kPinhole:
      return Vec3(d.x(), d.y(), 1.0).normalized();
    case CameraKind::kPinholeRadtan4: {
      Vec2 n = d;
      for (int it = 0; it < kMaxInversionIterations; ++it) {
        Mat2 j;
        const Vec2 err = radtan_distort(cam.distortion, n, &j) - d;
        if (err.norm() < kInversionTolerance * 1e-4) return Vec3(n.x(), n.y(), 1.0).normalized();
        n -= j.lu().solve(err);
      }
      if ((radtan_distort(cam.distortion, n, nullptr) - d).norm() > kInversionTolerance) {
        throw Error(ErrorCode::kNonConvergence, "radtan distortion inversion did not converge");
      }
      return Vec3(n.x(), n.y(), 1.0).normalized();
    }
    case CameraKind::kKannalaBrandt4: {
      const double td = d.norm();
      if (td < 1e-15) return Vec3(0.0, 0.0, 1.0);
      double theta = td;
      for (int it = 0; it < kMaxInversionIterations; ++it) {
        double deriv = 0.0;
        const double err = kb_distort(cam.distortion, theta, &deriv) - td;
        if (std::abs(err) < kInversionTolerance * 1e-4) break;
        if (!(deriv > 0.0)) break;
        theta -= err / deriv;
      }
      double deriv = 0.0;
      if (std::abs(kb_distort(cam.distortion, theta, &deriv) - td) > kInversionTolerance || !(deriv > 0.0)) {
        throw Error(ErrorCode::kNonConvergence, "kannala-brandt distortion inversion did not converge");
      }
      const double s = std::sin(theta) / td;
      return Vec3(s * d.x(), s * d.y(), std::cos(theta));
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown camera kind");
}

std::vector<std::optional<Vec2>> undistort_points(const CameraModel& src, const CameraModel& dst,
                                                  std::span<const Vec2> points) {
  if (dst.kind != CameraKind::kPinhole) {
    throw Error(ErrorCode::kInvalidArgument, "undistort_points destination must be a pinhole camera");
  }
  std::vector<std::optional<Vec2>> out;
  out.reserve(points.size());
  for (const Vec2& pt : points) {
    std::optional<Vec2> mapped;
    try {
      const Vec3 ray = unproject(src, pt);
      if (ray.z() > 0.0) {
        auto px = try_project(dst, ray);
        if (px && dst.in_image(*px)) mapped = px;
      }
    } catch (const Error&) {
      mapped.reset();
    }
    out.push_back(mapped);
  }
  return out;
}

void RigCalibration::validate() const {
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    cameras[i].model.validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (cameras[i].id == cameras[j].id) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate camera id '" + cameras[i].id + "'");
      }
    }
  }
}

const RigCamera& RigCalibration::camera(std::string_view id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return c;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown camera id '" + std::string(id) + "'");
}

bool RigCalibration::has_camera(std::string_view id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return true;
  }
  return false;
}

}  // namespace cpgt
