#include "cpgt_cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "cpgt/error.hpp"
#include "cpgt/fusion.hpp"
#include "cpgt/io.hpp"
#include "cpgt/metrics.hpp"
#include "cpgt/pipeline.hpp"
#include "cpgt/synth.hpp"
#include "cpgt/validation.hpp"

namespace cpgt::cli {

namespace fs = std::filesystem;

unsigned thread_count() {
  if (const char* env = std::getenv("CPGT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

namespace {

struct Inputs {
  std::string data;
  std::string trajectory, detections, control_points, calibration, imu, tracks;
  double sigma_px = 1.0;

  void resolve() {
    if (data.empty()) return;
    const auto p = io::DatasetPaths::in(data);
    auto fill = [](std::string& s, const fs::path& d) {
      if (s.empty()) s = d.string();
    };
    fill(trajectory, p.trajectory);
    fill(detections, p.detections);
    fill(control_points, p.control_points);
    fill(calibration, p.calibration);
    fill(imu, p.imu);
    fill(tracks, p.tracks);
  }

  static std::string need(const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorCode::kIo, std::string("no ") + what + " file given");
    return path;
  }
};

void add_sparse_inputs(CLI::App* app, Inputs& in, bool with_trajectory = true) {
  app->add_option("--data", in.data, "Dataset directory with the default file names");
  if (with_trajectory) app->add_option("--traj", in.trajectory, "Trajectory file");
  app->add_option("--detections", in.detections, "Control-point detection file");
  app->add_option("--cps", in.control_points, "Control-point file");
  app->add_option("--calib", in.calibration, "Calibration file");
  app->add_option("--sigma-px", in.sigma_px, "Detection standard deviation in pixels")->capture_default_str();
}

struct Sparse {
  std::vector<ControlPoint> cps;
  ObservationMap detections;
  RigCalibration rig;
};

Sparse load_sparse(Inputs& in) {
  in.resolve();
  Sparse s;
  s.rig = io::read_calibration(Inputs::need(in.calibration, "calibration"));
  s.cps = io::read_control_points(Inputs::need(in.control_points, "control point"));
  s.detections = io::read_detections(Inputs::need(in.detections, "detection"), in.sigma_px);
  io::check_detections(s.detections, s.cps, s.rig);
  return s;
}

Trajectory load_trajectory(const std::string& path, std::ostream& err) {
  io::Warnings warnings;
  Trajectory t = io::read_trajectory(Inputs::need(path, "trajectory"), &warnings);
  for (const auto& w : warnings) err << "cpgt-warning: " << w << '\n';
  return t;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    io::write_file(path, text);
  }
}

std::string num(double v, int p = 6) { return format_number(v, p); }

/// Runs `jobs` tasks on the configured number of threads, results in index order.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t jobs, F&& f) {
  std::vector<T> results(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  const unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(std::max<std::size_t>(jobs, 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs;) {
      try {
        results[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string preset = "figure8";
  std::string out;
  SynthConfig cfg;
};

int cmd_synth(SynthArgs& a, std::ostream& out) {
  a.cfg.kind = trajectory_kind_from_string(a.preset);
  const SynthWorld world = gen_world(a.cfg);
  const SynthDetections det = gen_detections(world);
  const auto imu = gen_imu(world);
  io::write_dataset(a.out, world, det, imu);
  std::size_t nobs = 0;
  for (const auto& [id, o] : det.control_points) nobs += o.size();
  std::ostringstream s;
  s << "preset=" << to_string(a.cfg.kind) << " seed=" << a.cfg.seed << " duration_s=" << num(a.cfg.duration_s, 3)
    << '\n'
    << "poses " << world.trajectory.size() << ", control points " << world.control_points.size() << " ("
    << det.unobserved_cps.size() << " unobserved), detections " << nobs << ", tracks " << det.tracks.size()
    << ", imu samples " << imu.size() << '\n';
  for (const auto& id : det.unobserved_cps) s << "unobserved " << id << '\n';
  io::write_file(fs::path(a.out) / "synth.txt", s.str());
  out << s.str();
  return kOk;
}

// ---------------------------------------------------------------- triangulate / align

struct SparseArgs {
  Inputs in;
  TriangulationOptions tri;
  std::string mode = "2d";
  std::string out;
};

ConfigEcho sparse_echo(const std::string& command, const SparseArgs& a) {
  return {{"command", command},
          {"trajectory", a.in.trajectory},
          {"detections", a.in.detections},
          {"control_points", a.in.control_points},
          {"calibration", a.in.calibration},
          {"sigma_px", num(a.in.sigma_px, 4)},
          {"threshold_px", num(a.tri.threshold_px, 4)},
          {"max_iterations", std::to_string(a.tri.max_iterations)},
          {"seed", std::to_string(a.tri.seed)},
          {"mode", a.mode}};
}

int cmd_triangulate(SparseArgs& a, std::ostream& out, std::ostream& err) {
  const Sparse s = load_sparse(a.in);
  const Trajectory traj = load_trajectory(a.in.trajectory, err);
  const ObservationMap posed = observations_with_poses(s.detections, traj, a.tri.pose_tolerance_ns);
  std::vector<std::pair<std::string, std::string>> failures;
  const TriangulationMap tris = triangulate_all(posed, traj, s.rig, s.cps, a.tri, &failures);
  std::ostringstream csv;
  for (const auto& [k, v] : sparse_echo("triangulate", a)) csv << "# " << k << '=' << v << '\n';
  csv << "cp_id,status,x,y,z,c00,c01,c02,c11,c12,c22,inliers,mean_reprojection_error_px\n";
  for (const auto& cp : s.cps) {
    auto it = tris.find(cp.id);
    if (it == tris.end()) {
      std::string why = "no-detections";
      for (const auto& [id, w] : failures) {
        if (id == cp.id) why = w;
      }
      csv << cp.id << ',' << why << ",,,,,,,,,,,\n";
      continue;
    }
    const auto& t = it->second;
    csv << cp.id << ",ok," << num(t.position.x(), 9) << ',' << num(t.position.y(), 9) << ','
        << num(t.position.z(), 9);
    for (int r = 0; r < 3; ++r) {
      for (int c = r; c < 3; ++c) csv << ',' << format_number(t.covariance(r, c), 12);
    }
    csv << ',' << t.inliers.size() << ',' << num(t.mean_reprojection_error_px, 6) << '\n';
  }
  emit(a.out, csv.str(), out);
  return kOk;
}

int cmd_align(SparseArgs& a, std::ostream& out, std::ostream& err) {
  const Sparse s = load_sparse(a.in);
  const Trajectory traj = load_trajectory(a.in.trajectory, err);
  const ObservationMap posed = observations_with_poses(s.detections, traj, a.tri.pose_tolerance_ns);
  const TriangulationMap tris = triangulate_all(posed, traj, s.rig, s.cps, a.tri);
  const SparseAlignment sa = sparse_align(tris, posed, traj, s.rig, s.cps);
  std::ostringstream csv;
  for (const auto& [k, v] : sparse_echo("align", a)) csv << "# " << k << '=' << v << '\n';
  const auto q = sa.world_from_local.rotation().canonical_quaternion();
  const Vec3& t = sa.world_from_local.translation();
  csv << "scale,tx,ty,tz,qx,qy,qz,qw,horizontal_fallback,scale_error_pct,gravity_error_deg\n"
      << num(sa.world_from_local.scale(), 9) << ',' << num(t.x(), 6) << ',' << num(t.y(), 6) << ','
      << num(t.z(), 6) << ',' << num(q.x(), 9) << ',' << num(q.y(), 9) << ',' << num(q.z(), 9) << ','
      << num(q.w(), 9) << ',' << (sa.horizontal_fallback ? 1 : 0) << ','
      << num(scale_error(sa.world_from_local), 6) << ',' << num(gravity_error(sa.world_from_local), 6) << '\n';
  csv << "cp_id,dim,triangulated,used,error_2d_m,error_3d_m,triangulation_uncertainty_m,measurement_uncertainty_m\n";
  for (const auto& r : sa.records) {
    csv << r.id << ',' << static_cast<int>(r.dim) << ',' << (r.triangulated ? 1 : 0) << ',' << (r.used ? 1 : 0)
        << ',' << num(r.error_2d) << ',' << (r.error_3d ? num(*r.error_3d) : "excluded") << ','
        << num(r.triangulation_uncertainty) << ',' << num(r.measurement_uncertainty) << '\n';
  }
  emit(a.out, csv.str(), out);
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  Inputs in;
  std::vector<std::string> trajectories;
  std::string reference;
  TriangulationOptions tri;
  std::string mode = "2d";
  double duration_s = 0.0;
  int runs = 1;
  std::string report;
  bool quiet = false;
};

int cmd_evaluate(EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.trajectories.empty()) {
    a.in.resolve();
    if (!a.in.trajectory.empty()) a.trajectories.push_back(a.in.trajectory);
  }
  if (a.trajectories.empty()) throw Error(ErrorCode::kIo, "no trajectory file given");
  if (a.runs < 1) throw Error(ErrorCode::kInvalidArgument, "--runs must be at least 1");
  const Sparse s = load_sparse(a.in);
  std::vector<Trajectory> trajs;
  for (const auto& p : a.trajectories) trajs.push_back(load_trajectory(p, err));
  std::optional<Trajectory> reference;
  if (!a.reference.empty()) reference = load_trajectory(a.reference, err);

  EvaluateOptions opt;
  opt.triangulation = a.tri;
  opt.mode = a.mode == "3d" ? ErrorMode::k3D : ErrorMode::k2D;
  if (a.mode != "2d" && a.mode != "3d") throw Error(ErrorCode::kInvalidArgument, "--mode must be 2d or 3d");
  if (a.duration_s > 0.0) opt.duration_ns = static_cast<TimestampNs>(std::llround(a.duration_s * 1e9));

  // Several trajectories are runs of one sequence; otherwise --runs repeats with successive seeds.
  const bool by_file = trajs.size() > 1;
  const std::size_t jobs = by_file ? trajs.size() : static_cast<std::size_t>(a.runs);
  auto reports = parallel_map<EvaluationReport>(jobs, [&](std::size_t i) {
    EvaluateOptions o = opt;
    if (!by_file) o.triangulation.seed = a.tri.seed + i;
    return evaluate(by_file ? trajs[i] : trajs[0], s.detections, s.cps, s.rig, o,
                    reference ? &*reference : nullptr);
  });

  std::ostringstream csv;
  for (std::size_t i = 0; i < jobs; ++i) {
    ConfigEcho echo{{"command", "evaluate"},
                    {"trajectory", by_file ? a.trajectories[i] : a.trajectories[0]},
                    {"reference", a.reference},
                    {"detections", a.in.detections},
                    {"control_points", a.in.control_points},
                    {"calibration", a.in.calibration},
                    {"sigma_px", num(a.in.sigma_px, 4)},
                    {"threshold_px", num(opt.triangulation.threshold_px, 4)},
                    {"seed", std::to_string(by_file ? a.tri.seed : a.tri.seed + i)},
                    {"mode", a.mode},
                    {"duration_s", a.duration_s > 0.0 ? num(a.duration_s, 3) : "detections"},
                    {"run", std::to_string(i)}};
    csv << format_evaluation_csv(reports[i], echo);
  }
  if (jobs > 1) {
    std::vector<std::vector<double>> score_runs(1), recall_runs(1);
    for (const auto& r : reports) {
      score_runs[0].push_back(r.score);
      recall_runs[0].push_back(r.cp_recall);
    }
    const GroupStats gs = group_stats(score_runs);
    const GroupStats gr = group_stats(recall_runs);
    csv << "runs,score_mean,score_std,cp_recall_mean,cp_recall_std,single_sequence\n"
        << jobs << ',' << num(gs.mean, 4) << ',' << num(gs.std, 4) << ',' << num(gr.mean, 4) << ','
        << num(gr.std, 4) << ',' << (gs.single_sequence ? 1 : 0) << '\n';
  }
  if (!a.report.empty()) io::write_file(a.report, csv.str());
  if (!a.quiet) {
    for (std::size_t i = 0; i < jobs; ++i) {
      if (jobs > 1) out << "run " << i << '\n';
      out << format_evaluation_summary(reports[i]);
    }
    if (a.report.empty()) out << csv.str();
  }
  return kOk;
}

// ---------------------------------------------------------------- fuse

struct FuseArgs {
  Inputs in;
  std::string mode = "full";
  FusionConfig cfg;
  bool no_prealign = false;
  std::string out, cov, report;
};

int cmd_fuse(FuseArgs& a, std::ostream& out, std::ostream& err) {
  a.cfg.mode = fusion_mode_from_string(a.mode);
  const Sparse s = load_sparse(a.in);
  FusionInput fin;
  fin.initial = load_trajectory(a.in.trajectory, err);
  fin.imu = io::read_imu(Inputs::need(a.in.imu, "IMU"));
  if (a.cfg.mode == FusionMode::kFull) fin.tracks = io::read_tracks(Inputs::need(a.in.tracks, "track"), a.in.sigma_px);
  fin.cp_detections = s.detections;
  fin.control_points = s.cps;
  fin.rig = s.rig;
  if (!a.no_prealign) {
    const ObservationMap posed = observations_with_poses(s.detections, fin.initial, a.cfg.pose_tolerance_ns);
    const TriangulationMap tris = triangulate_all(posed, fin.initial, s.rig, s.cps, {});
    fin.initial = fin.initial.transformed(sparse_align(tris, posed, fin.initial, s.rig, s.cps).world_from_local);
  }
  const PseudoGT gt =
      a.cfg.mode == FusionMode::kFull ? fuse(fin, a.cfg) : inertial_only_optimize(fin, a.cfg);

  std::ostringstream traj, cov, rep;
  io::write_trajectory(traj, gt.trajectory);
  io::write_covariance_sidecar(cov, gt.trajectory, gt.pose_covariances);
  rep << "# command=fuse\n# mode=" << a.mode << "\n# rounds=" << a.cfg.rounds
      << "\n# cp_deflation=" << num(a.cfg.cp_deflation, 4) << "\n# keyframe_stride=" << a.cfg.keyframe_stride
      << "\n# reprojection_huber=" << num(a.cfg.reprojection_huber, 4) << "\n# prealign=" << (a.no_prealign ? 0 : 1)
      << '\n';
  rep << "keyframes,initial_cost,final_cost,iterations,termination,median_position_uncertainty_m\n"
      << gt.trajectory.size() << ',' << num(gt.report.initial_cost, 6) << ',' << num(gt.report.final_cost, 6) << ','
      << gt.report.iterations << ',' << to_string(gt.report.termination) << ','
      << num(gt.median_position_uncertainty, 6) << '\n';
  rep << "round,feature_variance_factor,marker_variance_factor\n";
  for (std::size_t r = 0; r < gt.variance_factor_history.size(); ++r) {
    const auto& f = gt.variance_factor_history[r];
    rep << r << ',' << num(f[static_cast<int>(ResidualGroup::kFeatureReprojection)], 6) << ','
        << num(f[static_cast<int>(ResidualGroup::kMarkerReprojection)], 6) << '\n';
  }
  rep << "family,count,mean,std,max_abs,ks_distance\n";
  const FamilyResiduals fam = whitened_residuals(gt.report);
  if (fam.visual.size() >= 30) {
    rep << format_residual_stats_csv("visual", residual_stats({fam.visual.data(), std::size_t(fam.visual.size())}));
  }
  if (fam.imu.size() >= 30) {
    rep << format_residual_stats_csv("imu", residual_stats({fam.imu.data(), std::size_t(fam.imu.size())}));
  }
  if (a.out.empty()) throw Error(ErrorCode::kIo, "no output trajectory path given");
  io::write_file(a.out, traj.str());
  if (!a.cov.empty()) io::write_file(a.cov, cov.str());
  emit(a.report, rep.str(), out);
  return kOk;
}

// ---------------------------------------------------------------- loocv

int cmd_loocv(SparseArgs& a, std::ostream& out, std::ostream& err) {
  const Sparse s = load_sparse(a.in);
  const Trajectory traj = load_trajectory(a.in.trajectory, err);
  const ObservationMap posed = observations_with_poses(s.detections, traj, a.tri.pose_tolerance_ns);
  const TriangulationMap tris = triangulate_all(posed, traj, s.rig, s.cps, a.tri);
  const auto records = loocv(tris, posed, traj, s.rig, s.cps);
  std::vector<double> ratios;
  for (const auto& r : records) {
    if (r.status == LoocvStatus::kOk) ratios.push_back(r.ratio_2d);
  }
  std::sort(ratios.begin(), ratios.end());
  std::ostringstream csv;
  csv << format_loocv_csv(records, sparse_echo("loocv", a));
  if (!ratios.empty()) {
    const std::size_t m = ratios.size() / 2;
    const double median = ratios.size() % 2 ? ratios[m] : 0.5 * (ratios[m - 1] + ratios[m]);
    csv << "# median_ratio_2d=" << num(median, 4) << '\n';
  }
  emit(a.out, csv.str(), out);
  return kOk;
}

// ---------------------------------------------------------------- ate

struct AteArgs {
  std::string estimate, reference, align = "sim3", out;
  double assoc_tol_ms = 10.0;
};

int cmd_ate(AteArgs& a, std::ostream& out, std::ostream& err) {
  const Trajectory est = load_trajectory(a.estimate, err);
  const Trajectory ref = load_trajectory(a.reference, err);
  const auto mode = ate_alignment_from_string(a.align);
  const AteResult r = ate(est, ref, mode, static_cast<TimestampNs>(std::llround(a.assoc_tol_ms * 1e6)));
  std::ostringstream csv;
  csv << "# command=ate\n# estimate=" << a.estimate << "\n# reference=" << a.reference << "\n# align=" << a.align
      << "\n# assoc_tol_ms=" << num(a.assoc_tol_ms, 3) << "\nate_rmse_m,pairs,scale\n"
      << format_number(r.rmse, 12) << ',' << r.pairs << ',' << num(r.gt_from_estimate.scale(), 9) << '\n';
  emit(a.out, csv.str(), out);
  return kOk;
}

// ---------------------------------------------------------------- table

struct TableArgs {
  std::vector<std::string> reports;
  std::string out;
};

int cmd_table(TableArgs& a, std::ostream& out) {
  std::ostringstream csv;
  csv << "report,valid,score,cp_recall,pose_recall\n";
  std::vector<double> scores, recalls;
  for (const auto& path : a.reports) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
    std::string line;
    int data_line = 0;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty() || line[0] == '#') continue;
      if (++data_line != 2) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      if (f.size() < 6) throw Error(ErrorCode::kParse, path + ":" + std::to_string(n) + ": not an evaluation report");
      csv << path << ',' << f[0] << ',' << f[3] << ',' << f[4] << ',' << f[5] << '\n';
      scores.push_back(std::strtod(f[3].c_str(), nullptr));
      recalls.push_back(std::strtod(f[4].c_str(), nullptr));
      break;
    }
    if (data_line < 2) throw Error(ErrorCode::kParse, path + ": no summary row");
  }
  if (!scores.empty()) {
    double ms = 0, mr = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      ms += scores[i];
      mr += recalls[i];
    }
    csv << "mean,," << num(ms / scores.size(), 4) << ',' << num(mr / scores.size(), 4) << ",\n";
  }
  emit(a.out, csv.str(), out);
  return kOk;
}

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::kIo:
    case ErrorCode::kParse: return kInputError;
    case ErrorCode::kDegenerateConfiguration: return kDegenerateAlignment;
    default: return kFailure;
  }
}

void add_triangulation_flags(CLI::App* app, TriangulationOptions& tri) {
  app->add_option("--threshold", tri.threshold_px, "RANSAC inlier threshold in pixels")->capture_default_str();
  app->add_option("--max-iterations", tri.max_iterations, "RANSAC iteration budget")->capture_default_str();
  app->add_option("--seed", tri.seed, "RANSAC seed")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Control-point ground truth and evaluation toolkit", "cpgt"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--preset", synth.preset, "figure8 | spline | platform")->capture_default_str();
  s->add_option("--seed", synth.cfg.seed, "Random seed")->capture_default_str();
  s->add_option("--duration", synth.cfg.duration_s, "Duration in seconds")->capture_default_str();
  s->add_option("--cps", synth.cfg.cp_count, "Number of control points")->capture_default_str();
  s->add_option("--cp-3d-fraction", synth.cfg.cp_3d_fraction, "Share of 3D control points")->capture_default_str();
  s->add_option("--sigma-px", synth.cfg.detection_sigma_px, "Detection noise in pixels")->capture_default_str();
  s->add_option("--landmarks", synth.cfg.landmark_count, "Number of feature landmarks")->capture_default_str();
  s->add_option("--feature-sigma-px", synth.cfg.feature_sigma_px, "Feature noise in pixels")->capture_default_str();
  s->add_flag("--imu-noise", synth.cfg.imu_add_noise, "Add white IMU noise at the configured densities");
  s->add_flag("--cp-noise", synth.cfg.cp_noise, "Perturb surveyed positions by their covariance");
  s->add_option("--out", synth.out, "Output directory")->required();

  SparseArgs tri_args;
  auto* t = app.add_subcommand("triangulate", "Triangulate control points in the trajectory frame");
  add_sparse_inputs(t, tri_args.in);
  add_triangulation_flags(t, tri_args.tri);
  t->add_option("--out", tri_args.out, "Output file (default stdout)");

  SparseArgs align_args;
  auto* al = app.add_subcommand("align", "Estimate the world-from-local similarity");
  add_sparse_inputs(al, align_args.in);
  add_triangulation_flags(al, align_args.tri);
  al->add_option("--out", align_args.out, "Output file (default stdout)");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a trajectory against control points");
  add_sparse_inputs(e, ev.in, false);
  e->add_option("--traj", ev.trajectories, "Trajectory file; repeat for runs of one sequence");
  e->add_option("--reference", ev.reference, "Pseudo ground truth for pose recall");
  add_triangulation_flags(e, ev.tri);
  e->add_option("--mode", ev.mode, "2d | 3d")->capture_default_str();
  e->add_option("--duration", ev.duration_s, "Sequence duration in seconds (default: detection span)");
  e->add_option("--runs", ev.runs, "Repeat with successive seeds")->capture_default_str();
  e->add_option("--report", ev.report, "Write the CSV report here");
  e->add_flag("--quiet", ev.quiet, "No summary on stdout");

  FuseArgs fu;
  auto* f = app.add_subcommand("fuse", "Dense pseudo ground truth by visual-inertial fusion");
  add_sparse_inputs(f, fu.in);
  f->add_option("--imu", fu.in.imu, "IMU file");
  f->add_option("--tracks", fu.in.tracks, "Feature track file");
  f->add_option("--mode", fu.mode, "full | inertial-only")->capture_default_str();
  f->add_option("--stride", fu.cfg.keyframe_stride, "Keyframe stride")->capture_default_str();
  f->add_option("--rounds", fu.cfg.rounds, "Reweighting rounds")->capture_default_str();
  f->add_option("--deflation", fu.cfg.cp_deflation, "CP covariance multiplier")->capture_default_str();
  f->add_flag("--no-prealign", fu.no_prealign, "Initial trajectory is already in the world frame");
  f->add_option("--out", fu.out, "Output trajectory")->required();
  f->add_option("--cov", fu.cov, "Covariance sidecar");
  f->add_option("--report", fu.report, "Summary report (default stdout)");

  SparseArgs lo;
  auto* l = app.add_subcommand("loocv", "Leave-one-out validation of control points");
  add_sparse_inputs(l, lo.in);
  add_triangulation_flags(l, lo.tri);
  l->add_option("--out", lo.out, "Output file (default stdout)");

  AteArgs at;
  auto* a = app.add_subcommand("ate", "Absolute trajectory error");
  a->add_option("--est", at.estimate, "Estimated trajectory")->required();
  a->add_option("--gt", at.reference, "Reference trajectory")->required();
  a->add_option("--align", at.align, "sim3 | se3 | none")->capture_default_str();
  a->add_option("--assoc-tol-ms", at.assoc_tol_ms, "Timestamp association tolerance")->capture_default_str();
  a->add_option("--out", at.out, "Output file (default stdout)");

  TableArgs tb;
  auto* tab = app.add_subcommand("table", "Collect evaluation reports into one table");
  tab->add_option("reports", tb.reports, "Evaluation report files")->required();
  tab->add_option("--out", tb.out, "Output file (default stdout)");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == 0) {
      app.exit(pe, out, err);
      return kOk;
    }
    err << "cpgt-error[usage]: " << pe.what() << '\n';
    return kInputError;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_triangulate(tri_args, out, err);
    if (al->parsed()) return cmd_align(align_args, out, err);
    if (e->parsed()) return cmd_evaluate(ev, out, err);
    if (f->parsed()) return cmd_fuse(fu, out, err);
    if (l->parsed()) return cmd_loocv(lo, out, err);
    if (a->parsed()) return cmd_ate(at, out, err);
    if (tab->parsed()) return cmd_table(tb, out);
  } catch (const Error& ex) {
    err << "cpgt-error[" << to_string(ex.code()) << "]: " << ex.what() << '\n';
    return exit_code_for(ex.code());
  } catch (const std::exception& ex) {
    err << "cpgt-error[internal]: " << ex.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace cpgt::cli
