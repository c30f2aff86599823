#include "cpgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cpgt/alignment.hpp"
#include "cpgt/error.hpp"

namespace cpgt {

double score(double e) {
  if (std::isnan(e) || e < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "score of negative or NaN error " + std::to_string(e));
  }
  if (e <= kScoreAnchors.front().first) return kScoreAnchors.front().second;
  if (e >= kScoreAnchors.back().first) return kScoreAnchors.back().second;
  for (std::size_t i = 1; i < kScoreAnchors.size(); ++i) {
    const auto [e1, s1] = kScoreAnchors[i];
    if (e == e1) return s1;
    if (e < e1) {
      const auto [e0, s0] = kScoreAnchors[i - 1];
      return s0 + (s1 - s0) * (e - e0) / (e1 - e0);
    }
  }
  return kScoreAnchors.back().second;
}

double sequence_score(std::span<const double> errors) {
  if (errors.empty()) throw Error(ErrorCode::kInvalidArgument, "sequence has no control points");
  double sum = 0.0;
  for (double e : errors) sum += score(e);
  return sum / static_cast<double>(errors.size());
}

double cp_recall(std::span<const double> errors, double threshold_m) {
  if (errors.empty()) throw Error(ErrorCode::kInvalidArgument, "sequence has no control points");
  const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= threshold_m; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(errors.size());
}

double pose_recall(const Trajectory& estimate, const Trajectory& reference, double threshold_m,
                   TimestampNs assoc_tol_ns) {
  if (reference.empty()) throw Error(ErrorCode::kInvalidArgument, "pose recall against an empty reference");
  std::size_t hits = 0;
  for (const auto& ref : reference.poses()) {
    const auto est = estimate.lookup(ref.timestamp_ns, assoc_tol_ns);
    if (!est) continue;
    if ((est->translation() - ref.pose.translation()).head<2>().norm() <= threshold_m) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(reference.size());
}

std::string_view to_string(AteAlignment a) {
  switch (a) {
    case AteAlignment::kSim3: return "sim3";
    case AteAlignment::kSe3: return "se3";
    case AteAlignment::kNone: return "none";
  }
  return "?";
}

AteAlignment ate_alignment_from_string(std::string_view name) {
  if (name == "sim3") return AteAlignment::kSim3;
  if (name == "se3") return AteAlignment::kSe3;
  if (name == "none") return AteAlignment::kNone;
  throw Error(ErrorCode::kInvalidArgument, "unknown ATE alignment '" + std::string(name) + "'");
}

AteResult ate(const Trajectory& estimate, const Trajectory& reference, AteAlignment alignment,
              TimestampNs assoc_tol_ns) {
  std::vector<Vec3> est, ref;
  for (const auto& r : reference.poses()) {
    if (auto e = estimate.lookup(r.timestamp_ns, assoc_tol_ns)) {
      est.push_back(e->translation());
      ref.push_back(r.pose.translation());
    }
  }
  if (est.size() < 3) {
    throw Error(ErrorCode::kInsufficientObservations,
                "ATE needs at least 3 associated poses, got " + std::to_string(est.size()));
  }
  AteResult out;
  out.pairs = est.size();
  if (alignment != AteAlignment::kNone) out.gt_from_estimate = umeyama(est, ref, alignment == AteAlignment::kSim3);
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (ref[i] - out.gt_from_estimate.apply(est[i])).squaredNorm();
  out.rmse = std::sqrt(sum / static_cast<double>(est.size()));
  return out;
}

double ate_rmse(const Trajectory& estimate, const Trajectory& reference, AteAlignment alignment,
                TimestampNs assoc_tol_ns) {
  return ate(estimate, reference, alignment, assoc_tol_ns).rmse;
}

double scale_error(const Similarity& t) { return 100.0 * std::abs(t.scale() - 1.0); }

double gravity_error(const Similarity& t) {
  const Vec3 z = t.rotation() * Vec3::UnitZ();
  const double c = std::clamp(z.z(), -1.0, 1.0);
  const double s = z.head<2>().norm();
  return std::atan2(s, c) * 180.0 / M_PI;
}

bool coverage_check(const Trajectory& trajectory, TimestampNs sequence_duration_ns) {
  if (trajectory.empty()) return false;
  return 2 * trajectory.span_ns() >= sequence_duration_ns;
}

GroupStats group_stats(std::span<const std::vector<double>> runs) {
  if (runs.empty()) throw Error(ErrorCode::kInvalidArgument, "group statistics of zero sequences");
  const std::size_t k = runs.front().size();
  double mean = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].size() < 2) {
      throw Error(ErrorCode::kInvalidArgument, "sequence " + std::to_string(i) + " has fewer than 2 runs");
    }
    if (runs[i].size() != k) {
      throw Error(ErrorCode::kInvalidArgument, "sequence " + std::to_string(i) + " has " +
                                                   std::to_string(runs[i].size()) + " runs, expected " +
                                                   std::to_string(k));
    }
    double xbar = 0.0;
    for (double x : runs[i]) xbar += x;
    xbar /= static_cast<double>(k);
    mean += xbar;
    for (double x : runs[i]) ss += (x - xbar) * (x - xbar);
  }
  const double n = static_cast<double>(runs.size());
  const double kd = static_cast<double>(k);
  GroupStats out;
  out.sequences = runs.size();
  out.runs = k;
  out.mean = mean / n;
  out.single_sequence = runs.size() == 1;
  const double seq_term = out.single_sequence ? 1.0 : n * (n - 1.0);
  out.std = std::sqrt(ss / (kd * (kd - 1.0) * seq_term));
  return out;
}

}  // namespace cpgt
