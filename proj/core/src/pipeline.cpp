#include "cpgt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cpgt/error.hpp"

namespace cpgt {

std::string format_number(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  std::string s(buf);
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) s = s.front() == '-' ? s.substr(1) : s;
  return s;
}

ObservationMap observations_with_poses(const ObservationMap& detections, const Trajectory& poses,
                                       TimestampNs tolerance_ns) {
  ObservationMap out;
  for (const auto& [id, obs] : detections) {
    std::vector<Observation> kept;
    for (const auto& o : obs) {
      if (poses.lookup(o.image_id, tolerance_ns)) kept.push_back(o);
    }
    if (!kept.empty()) out.emplace(id, std::move(kept));
  }
  return out;
}

TriangulationMap triangulate_all(const ObservationMap& posed, const Trajectory& poses, const RigCalibration& rig,
                                 std::span<const ControlPoint> cps, const TriangulationOptions& options,
                                 std::vector<std::pair<std::string, std::string>>* failures) {
  TriangulationMap out;
  for (const auto& cp : cps) {
    auto it = posed.find(cp.id);
    if (it == posed.end()) {
      if (failures) failures->emplace_back(cp.id, "no detections with a pose");
      continue;
    }
    try {
      out.emplace(cp.id, triangulate_control_point(cp.id, it->second, poses, rig, options));
    } catch (const Error& e) {
      if (failures) failures->emplace_back(cp.id, std::string(to_string(e.code())));
    }
  }
  return out;
}

EvaluationReport evaluate(const Trajectory& trajectory, const ObservationMap& detections,
                          std::span<const ControlPoint> cps, const RigCalibration& rig,
                          const EvaluateOptions& options, const Trajectory* reference) {
  if (cps.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one control point");
  EvaluationReport rep;
  rep.span_ns = trajectory.span_ns();
  if (options.duration_ns) {
    rep.duration_ns = *options.duration_ns;
  } else {
    TimestampNs lo = std::numeric_limits<TimestampNs>::max(), hi = std::numeric_limits<TimestampNs>::min();
    for (const auto& [id, obs] : detections) {
      for (const auto& o : obs) {
        lo = std::min(lo, o.image_id);
        hi = std::max(hi, o.image_id);
      }
    }
    rep.duration_ns = hi > lo ? hi - lo : rep.span_ns;
  }
  rep.valid = coverage_check(trajectory, rep.duration_ns);

  const ObservationMap posed =
      observations_with_poses(detections, trajectory, options.triangulation.pose_tolerance_ns);
  for (const auto& cp : cps) {
    CpEvaluation ce;
    ce.id = cp.id;
    ce.dim = cp.dim;
    ce.error = std::numeric_limits<double>::infinity();
    ce.error_2d = ce.error;
    ce.excluded = options.mode == ErrorMode::k3D && !cp.is_3d();
    if (auto it = posed.find(cp.id); it != posed.end()) ce.observations = it->second.size();
    ce.measurement_uncertainty = sqrt_spectral_norm(cp.measurement_covariance());
    rep.cps.push_back(std::move(ce));
  }

  std::vector<double> errors;
  auto collect = [&] {
    errors.clear();
    for (const auto& ce : rep.cps) {
      if (!ce.excluded) errors.push_back(ce.error);
    }
    if (errors.empty()) throw Error(ErrorCode::kInvalidArgument, "no control point applies to this evaluation mode");
  };

  if (!rep.valid) {
    for (auto& ce : rep.cps) ce.failure = "coverage";
    collect();
    rep.score = sequence_score(errors);
    rep.cp_recall = cp_recall(errors, options.cp_threshold_m);
    rep.scale_error = rep.gravity_error = std::numeric_limits<double>::quiet_NaN();
    if (reference) rep.pose_recall = 0.0;
    return rep;
  }

  std::vector<std::pair<std::string, std::string>> failures;
  const TriangulationMap tris = triangulate_all(posed, trajectory, rig, cps, options.triangulation, &failures);
  for (const auto& [id, why] : failures) {
    for (auto& ce : rep.cps) {
      if (ce.id == id) ce.failure = why;
    }
  }
  SparseAlignment sa = sparse_align(tris, posed, trajectory, rig, cps, options.alignment);
  rep.world_from_local = sa.world_from_local;
  rep.horizontal_fallback = sa.horizontal_fallback;
  for (std::size_t i = 0; i < rep.cps.size(); ++i) {
    auto& ce = rep.cps[i];
    const auto& rec = sa.records[i];
    ce.triangulated = rec.triangulated;
    if (rec.triangulated) ce.inliers = tris.at(ce.id).inliers.size();
    ce.error_2d = rec.error_2d;
    ce.error_3d = rec.error_3d;
    ce.triangulation_uncertainty = rec.triangulation_uncertainty;
    ce.error = options.mode == ErrorMode::k2D ? rec.error_2d
                                              : rec.error_3d.value_or(std::numeric_limits<double>::infinity());
  }
  collect();
  rep.score = sequence_score(errors);
  rep.cp_recall = cp_recall(errors, options.cp_threshold_m);
  rep.scale_error = scale_error(sa.world_from_local);
  rep.gravity_error = gravity_error(sa.world_from_local);
  if (reference) {
    rep.pose_recall = pose_recall(trajectory.transformed(sa.world_from_local), *reference, options.pose_threshold_m,
                                  options.triangulation.pose_tolerance_ns);
  }
  return rep;
}

namespace {

void echo(std::ostringstream& out, const ConfigEcho& config) {
  for (const auto& [k, v] : config) out << "# " << k << '=' << v << '\n';
}

}  // namespace

std::string format_evaluation_csv(const EvaluationReport& r, const ConfigEcho& config) {
  std::ostringstream out;
  echo(out, config);
  out << "valid,duration_s,span_s,score,cp_recall,pose_recall,scale_error_pct,gravity_error_deg,"
         "horizontal_fallback,scale,tx,ty,tz,qx,qy,qz,qw\n";
  const auto q = r.world_from_local.rotation().canonical_quaternion();
  const Vec3& t = r.world_from_local.translation();
  out << (r.valid ? "valid" : "failure") << ',' << format_number(r.duration_ns * 1e-9, 3) << ','
      << format_number(r.span_ns * 1e-9, 3) << ',' << format_number(r.score, 4) << ','
      << format_number(r.cp_recall, 4) << ',' << (r.pose_recall ? format_number(*r.pose_recall, 4) : "") << ','
      << format_number(r.scale_error, 6) << ',' << format_number(r.gravity_error, 6) << ','
      << (r.horizontal_fallback ? 1 : 0) << ',' << format_number(r.world_from_local.scale(), 9) << ','
      << format_number(t.x(), 6) << ',' << format_number(t.y(), 6) << ',' << format_number(t.z(), 6) << ','
      << format_number(q.x(), 9) << ',' << format_number(q.y(), 9) << ',' << format_number(q.z(), 9) << ','
      << format_number(q.w(), 9) << '\n';
  out << "cp_id,dim,observations,inliers,triangulated,error_m,excluded,error_2d_m,error_3d_m,"
         "triangulation_uncertainty_m,measurement_uncertainty_m,failure\n";
  for (const auto& c : r.cps) {
    out << c.id << ',' << static_cast<int>(c.dim) << ',' << c.observations << ',' << c.inliers << ','
        << (c.triangulated ? 1 : 0) << ',' << format_number(c.error, 6) << ',' << (c.excluded ? 1 : 0) << ','
        << format_number(c.error_2d, 6) << ',' << (c.error_3d ? format_number(*c.error_3d, 6) : "excluded") << ','
        << format_number(c.triangulation_uncertainty, 6) << ',' << format_number(c.measurement_uncertainty, 6) << ','
        << c.failure << '\n';
  }
  return out.str();
}

std::string format_evaluation_summary(const EvaluationReport& r) {
  std::ostringstream out;
  std::size_t tri = 0;
  for (const auto& c : r.cps) tri += c.triangulated ? 1 : 0;
  out << "coverage     " << (r.valid ? "valid" : "failure") << " (" << format_number(r.span_ns * 1e-9, 1) << " of "
      << format_number(r.duration_ns * 1e-9, 1) << " s)\n";
  out << "score        " << format_number(r.score, 2) << '\n';
  out << "CP@1m        " << format_number(r.cp_recall, 2) << " %\n";
  if (r.pose_recall) out << "R@5m         " << format_number(*r.pose_recall, 2) << " %\n";
  out << "triangulated " << tri << " / " << r.cps.size() << '\n';
  out << "scale error  " << format_number(r.scale_error, 4) << " %\n";
  out << "gravity err  " << format_number(r.gravity_error, 4) << " deg\n";
  if (r.horizontal_fallback) out << "note         horizontal initialization fallback\n";
  return out.str();
}

std::string format_loocv_csv(std::span<const LoocvRecord> records, const ConfigEcho& config) {
  std::ostringstream out;
  echo(out, config);
  out << "cp_id,dim,status,error_2d_m,uncertainty_2d_m,ratio_2d,error_3d_m,uncertainty_3d_m,ratio_3d\n";
  for (const auto& r : records) {
    out << r.cp_id << ',' << static_cast<int>(r.dim) << ',' << to_string(r.status) << ',';
    if (r.status == LoocvStatus::kOk) {
      out << format_number(r.error_2d, 6) << ',' << format_number(r.uncertainty_2d, 6) << ','
          << format_number(r.ratio_2d, 4) << ',';
      if (r.error_3d) {
        out << format_number(*r.error_3d, 6) << ',' << format_number(*r.uncertainty_3d, 6) << ','
            << format_number(*r.ratio_3d, 4);
      } else {
        out << "excluded,excluded,excluded";
      }
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  return out.str();
}

std::string format_residual_stats_csv(const std::string& family, const ResidualStats& s) {
  std::ostringstream out;
  out << family << ',' << s.count << ',' << format_number(s.mean, 6) << ',' << format_number(s.std, 6) << ','
      << format_number(s.max_abs, 6) << ',' << format_number(s.ks_distance, 6) << '\n';
  return out.str();
}

}  // namespace cpgt
