#include "cpgt/validation.hpp"

#include <algorithm>
#include <cmath>

#include "cpgt/error.hpp"

namespace cpgt {

std::string_view to_string(LoocvStatus s) {
  switch (s) {
    case LoocvStatus::kOk: return "ok";
    case LoocvStatus::kNotTriangulated: return "not-triangulated";
    case LoocvStatus::kDegenerate: return "degenerate";
  }
  return "?";
}

std::vector<LoocvRecord> loocv(const TriangulationMap& triangulations, const ObservationMap& observations,
                               const Trajectory& poses, const RigCalibration& rig, std::span<const ControlPoint> cps,
                               const AlignmentOptions& options) {
  if (cps.size() < 4) {
    throw Error(ErrorCode::kInsufficientObservations,
                "LOOCV needs at least 4 control points, got " + std::to_string(cps.size()));
  }
  std::vector<LoocvRecord> out;
  for (std::size_t n = 0; n < cps.size(); ++n) {
    const ControlPoint& cp = cps[n];
    LoocvRecord rec;
    rec.cp_id = cp.id;
    rec.dim = cp.dim;
    auto tri = triangulations.find(cp.id);
    if (tri == triangulations.end()) {
      rec.status = LoocvStatus::kNotTriangulated;
      rec.message = "control point has no triangulation";
      out.push_back(std::move(rec));
      continue;
    }
    std::vector<ControlPoint> rest;
    for (std::size_t m = 0; m < cps.size(); ++m) {
      if (m != n) rest.push_back(cps[m]);
    }
    Similarity t;
    try {
      const InitialAlignment init = initial_alignment(triangulations, rest);
      t = joint_sparse_align(triangulations, observations, poses, rig, rest, init.transform, options)
              .world_from_local;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateConfiguration) throw;
      rec.status = LoocvStatus::kDegenerate;
      rec.message = e.what();
      out.push_back(std::move(rec));
      continue;
    }
    const Vec3 d = cp.position - t.apply(tri->second.position);
    const Mat3 sigma = propagate_covariance(tri->second.covariance, t) + cp.covariance;
    rec.error_2d = d.head<2>().norm();
    rec.uncertainty_2d = sqrt_spectral_norm(sigma.topLeftCorner<2, 2>());
    rec.ratio_2d = rec.error_2d / rec.uncertainty_2d;
    if (cp.is_3d()) {
      rec.error_3d = d.norm();
      rec.uncertainty_3d = sqrt_spectral_norm(sigma);
      rec.ratio_3d = *rec.error_3d / *rec.uncertainty_3d;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

ResidualStats residual_stats(std::span<const double> samples, int bins, double range) {
  if (samples.size() < 30) {
    throw Error(ErrorCode::kInsufficientObservations,
                "residual statistics need at least 30 samples, got " + std::to_string(samples.size()));
  }
  if (bins < 1 || !(range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "invalid histogram layout");
  ResidualStats s;
  s.count = samples.size();
  const double n = static_cast<double>(s.count);
  for (double x : samples) {
    s.mean += x;
    s.max_abs = std::max(s.max_abs, std::abs(x));
  }
  s.mean /= n;
  double ss = 0.0;
  for (double x : samples) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / (n - 1.0));

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double phi = 0.5 * std::erfc(-sorted[i] / std::sqrt(2.0));
    s.ks_distance = std::max({s.ks_distance, static_cast<double>(i + 1) / n - phi, phi - static_cast<double>(i) / n});
  }

  s.histogram.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) s.histogram.edges[b] = -range + 2.0 * range * b / bins;
  s.histogram.counts.assign(bins, 0);
  for (double x : samples) {
    if (x < -range || x > range) continue;
    const int b = std::min(bins - 1, static_cast<int>((x + range) / (2.0 * range) * bins));
    ++s.histogram.counts[b];
  }
  return s;
}

}  // namespace cpgt
