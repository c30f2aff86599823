#include "cpgt/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cpgt/error.hpp"

namespace cpgt::io {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParse, source + ":" + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  if (sep == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
      while (i < line.size() && line[i] == '\r') ++i;
    }
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view s, const std::string& source, std::size_t line, std::string_view field) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    fail(source, line, "invalid number '" + std::string(s) + "' in field " + std::string(field));
  }
  return v;
}

std::int64_t to_int(std::string_view s, const std::string& source, std::size_t line, std::string_view field) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    fail(source, line, "invalid integer '" + std::string(s) + "' in field " + std::string(field));
  }
  return v;
}

/// Iterates over non-empty, non-comment lines. A first line starting with
/// `header_prefix` is skipped.
template <typename F>
void for_each_record(std::istream& in, std::string_view header_prefix, F&& f) {
  std::string line;
  std::size_t n = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (first && !header_prefix.empty() && t.substr(0, header_prefix.size()) == header_prefix) {
      first = false;
      continue;
    }
    first = false;
    f(t, n);
  }
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  const int n = std::snprintf(buf, sizeof buf, format, args...);
  return std::string(buf, static_cast<std::size_t>(std::max(0, n)));
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

Mat2 isotropic(double sigma_px) {
  if (!(sigma_px > 0.0)) throw Error(ErrorCode::kInvalidArgument, "detection sigma must be positive");
  return Mat2::Identity() * sigma_px * sigma_px;
}

json pose_to_json(const RigidPose& p) {
  const auto q = p.rotation().canonical_quaternion();
  return {{"rotation_xyzw", {q.x(), q.y(), q.z(), q.w()}},
          {"translation", {p.translation().x(), p.translation().y(), p.translation().z()}}};
}

RigidPose pose_from_json(const json& j) {
  const auto q = j.at("rotation_xyzw").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3) throw std::invalid_argument("pose needs rotation_xyzw[4] and translation[3]");
  return RigidPose(Rotation::from_wxyz(q[3], q[0], q[1], q[2]), Vec3(t[0], t[1], t[2]));
}

}  // namespace

Trajectory parse_trajectory(std::istream& in, const std::string& source, Warnings* warnings) {
  std::vector<StampedPose> poses;
  for_each_record(in, "", [&](std::string_view line, std::size_t n) {
    const auto f = split(line, ' ');
    if (f.size() != 8) fail(source, n, "expected 8 fields, got " + std::to_string(f.size()));
    StampedPose sp;
    sp.timestamp_ns = to_int(f[0], source, n, "timestamp_ns");
    const Vec3 t(to_double(f[1], source, n, "tx"), to_double(f[2], source, n, "ty"), to_double(f[3], source, n, "tz"));
    const double qx = to_double(f[4], source, n, "qx"), qy = to_double(f[5], source, n, "qy");
    const double qz = to_double(f[6], source, n, "qz"), qw = to_double(f[7], source, n, "qw");
    const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
    if (!(norm > 1e-12)) fail(source, n, "zero quaternion");
    if (std::abs(norm - 1.0) > 1e-6 && warnings) {
      warnings->push_back(source + ":" + std::to_string(n) + ": quaternion norm " + fmt("%.6f", norm) +
                          " renormalized");
    }
    if (!poses.empty() && sp.timestamp_ns <= poses.back().timestamp_ns) {
      fail(source, n, "timestamps must be strictly increasing");
    }
    sp.pose = RigidPose(Rotation::from_wxyz(qw, qx, qy, qz), t);
    poses.push_back(sp);
  });
  return Trajectory(std::move(poses));
}

void write_trajectory(std::ostream& out, const Trajectory& trajectory) {
  out << "# timestamp_ns tx ty tz qx qy qz qw\n";
  for (const auto& sp : trajectory.poses()) {
    const auto q = sp.pose.rotation().canonical_quaternion();
    const Vec3& t = sp.pose.translation();
    out << fmt("%lld %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", static_cast<long long>(sp.timestamp_ns), t.x(), t.y(),
               t.z(), q.x(), q.y(), q.z(), q.w());
  }
}

Trajectory read_trajectory(const std::filesystem::path& path, Warnings* warnings) {
  auto in = open_in(path);
  return parse_trajectory(in, path.string(), warnings);
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  auto out = open_out(path);
  write_trajectory(out, trajectory);
}

std::vector<ControlPoint> parse_control_points(std::istream& in, const std::string& source) {
  std::vector<ControlPoint> cps;
  std::set<std::string> ids;
  for_each_record(in, "id,", [&](std::string_view line, std::size_t n) {
    const auto f = split(line, ',');
    if (f.size() != 7) fail(source, n, "expected 7 fields, got " + std::to_string(f.size()));
    ControlPoint cp;
    cp.id = std::string(f[0]);
    if (cp.id.empty()) fail(source, n, "empty control point id");
    if (!ids.insert(cp.id).second) fail(source, n, "duplicate control point id '" + cp.id + "'");
    const auto dim = to_int(f[1], source, n, "dim");
    if (dim != 2 && dim != 3) fail(source, n, "dim must be 2 or 3");
    cp.dim = dim == 3 ? CpDim::k3D : CpDim::k2D;
    const double sxy = to_double(f[5], source, n, "sigma_xy");
    if (!(sxy > 0.0)) fail(source, n, "sigma_xy must be positive");
    double z = 0.0, sz = 1.0;
    if (cp.is_3d()) {
      z = to_double(f[4], source, n, "z");
      sz = to_double(f[6], source, n, "sigma_z");
      if (!(sz > 0.0)) fail(source, n, "sigma_z must be positive");
    } else if (!f[4].empty() || !f[6].empty()) {
      fail(source, n, "z and sigma_z must be empty for a 2D control point");
    }
    cp.position = Vec3(to_double(f[2], source, n, "x"), to_double(f[3], source, n, "y"), z);
    cp.covariance = Vec3(sxy * sxy, sxy * sxy, sz * sz).asDiagonal();
    cps.push_back(std::move(cp));
  });
  return cps;
}

void write_control_points(std::ostream& out, std::span<const ControlPoint> cps) {
  out << "id,dim,x,y,z,sigma_xy,sigma_z\n";
  for (const auto& cp : cps) {
    const double sxy = std::sqrt(cp.covariance(0, 0));
    if (cp.is_3d()) {
      out << cp.id << fmt(",3,%.9f,%.9f,%.9f,%.9f,%.9f\n", cp.position.x(), cp.position.y(), cp.position.z(), sxy,
                          std::sqrt(cp.covariance(2, 2)));
    } else {
      out << cp.id << fmt(",2,%.9f,%.9f,,%.9f,\n", cp.position.x(), cp.position.y(), sxy);
    }
  }
}

std::vector<ControlPoint> read_control_points(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_control_points(in, path.string());
}

ObservationMap parse_detections(std::istream& in, const std::string& source, double sigma_px) {
  const Mat2 cov = isotropic(sigma_px);
  ObservationMap out;
  for_each_record(in, "timestamp_ns,", [&](std::string_view line, std::size_t n) {
    const auto f = split(line, ',');
    if (f.size() != 5) fail(source, n, "expected 5 fields, got " + std::to_string(f.size()));
    Observation o;
    o.image_id = to_int(f[0], source, n, "timestamp_ns");
    o.camera_id = std::string(f[1]);
    o.pixel = Vec2(to_double(f[3], source, n, "u"), to_double(f[4], source, n, "v"));
    o.covariance = cov;
    if (o.camera_id.empty() || f[2].empty()) fail(source, n, "empty camera or control point id");
    out[std::string(f[2])].push_back(std::move(o));
  });
  return out;
}

void write_detections(std::ostream& out, const ObservationMap& detections) {
  out << "timestamp_ns,camera_id,cp_id,u,v\n";
  for (const auto& [id, obs] : detections) {
    for (const auto& o : obs) {
      out << o.image_id << ',' << o.camera_id << ',' << id << fmt(",%.9f,%.9f\n", o.pixel.x(), o.pixel.y());
    }
  }
}

ObservationMap read_detections(const std::filesystem::path& path, double sigma_px) {
  auto in = open_in(path);
  return parse_detections(in, path.string(), sigma_px);
}

void check_detections(const ObservationMap& detections, std::span<const ControlPoint> cps,
                      const RigCalibration& rig) {
  std::set<std::string> ids;
  for (const auto& cp : cps) ids.insert(cp.id);
  for (const auto& [id, obs] : detections) {
    if (!ids.count(id)) throw Error(ErrorCode::kParse, "detection references unknown control point '" + id + "'");
    for (const auto& o : obs) {
      if (!rig.has_camera(o.camera_id)) {
        throw Error(ErrorCode::kParse, "detection of '" + id + "' at " + std::to_string(o.image_id) +
                                           " references unknown camera '" + o.camera_id + "'");
      }
    }
  }
}

std::vector<ImuSample> parse_imu(std::istream& in, const std::string& source) {
  std::vector<ImuSample> out;
  for_each_record(in, "timestamp_ns,", [&](std::string_view line, std::size_t n) {
    const auto f = split(line, ',');
    if (f.size() != 7) fail(source, n, "expected 7 fields, got " + std::to_string(f.size()));
    ImuSample s;
    s.timestamp_ns = to_int(f[0], source, n, "timestamp_ns");
    if (!out.empty() && s.timestamp_ns <= out.back().timestamp_ns) {
      fail(source, n, "timestamps must be strictly increasing");
    }
    s.gyro = Vec3(to_double(f[1], source, n, "gx"), to_double(f[2], source, n, "gy"), to_double(f[3], source, n, "gz"));
    s.accel = Vec3(to_double(f[4], source, n, "ax"), to_double(f[5], source, n, "ay"), to_double(f[6], source, n, "az"));
    out.push_back(s);
  });
  return out;
}

void write_imu(std::ostream& out, std::span<const ImuSample> samples) {
  out << "timestamp_ns,gx,gy,gz,ax,ay,az\n";
  for (const auto& s : samples) {
    out << s.timestamp_ns
        << fmt(",%.12f,%.12f,%.12f,%.12f,%.12f,%.12f\n", s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(),
               s.accel.z());
  }
}

std::vector<ImuSample> read_imu(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_imu(in, path.string());
}

std::vector<FeatureTrack> parse_tracks(std::istream& in, const std::string& source, double sigma_px) {
  const Mat2 cov = isotropic(sigma_px);
  std::map<std::int64_t, std::size_t> index;
  std::vector<FeatureTrack> out;
  for_each_record(in, "track_id,", [&](std::string_view line, std::size_t n) {
    const auto f = split(line, ',');
    if (f.size() != 5) fail(source, n, "expected 5 fields, got " + std::to_string(f.size()));
    const auto id = to_int(f[0], source, n, "track_id");
    Observation o;
    o.image_id = to_int(f[1], source, n, "timestamp_ns");
    o.camera_id = std::string(f[2]);
    o.pixel = Vec2(to_double(f[3], source, n, "u"), to_double(f[4], source, n, "v"));
    o.covariance = cov;
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back({id, {}});
    auto& track = out[it->second].observations;
    if (!track.empty() && o.image_id < track.back().image_id) {
      fail(source, n, "observations of track " + std::to_string(id) + " out of time order");
    }
    track.push_back(std::move(o));
  });
  return out;
}

void write_tracks(std::ostream& out, std::span<const FeatureTrack> tracks) {
  out << "track_id,timestamp_ns,camera_id,u,v\n";
  for (const auto& t : tracks) {
    for (const auto& o : t.observations) {
      out << t.track_id << ',' << o.image_id << ',' << o.camera_id << fmt(",%.9f,%.9f\n", o.pixel.x(), o.pixel.y());
    }
  }
}

std::vector<FeatureTrack> read_tracks(const std::filesystem::path& path, double sigma_px) {
  auto in = open_in(path);
  return parse_tracks(in, path.string(), sigma_px);
}

RigCalibration parse_calibration(std::istream& in, const std::string& source) {
  RigCalibration rig;
  try {
    const json j = json::parse(in);
    for (const auto& c : j.at("cameras")) {
      RigCamera cam;
      cam.id = c.at("id").get<std::string>();
      cam.model.kind = camera_kind_from_string(c.at("model").get<std::string>());
      cam.model.fx = c.at("fx").get<double>();
      cam.model.fy = c.at("fy").get<double>();
      cam.model.cx = c.at("cx").get<double>();
      cam.model.cy = c.at("cy").get<double>();
      cam.model.width = c.at("width").get<int>();
      cam.model.height = c.at("height").get<int>();
      const auto d = c.value("distortion", std::vector<double>{});
      if (d.size() > 4) throw std::invalid_argument("camera " + cam.id + ": at most 4 distortion coefficients");
      for (std::size_t i = 0; i < d.size(); ++i) cam.model.distortion[i] = d[i];
      cam.camera_from_device = pose_from_json(c.at("camera_from_device"));
      rig.cameras.push_back(std::move(cam));
    }
    const json& imu = j.at("imu");
    rig.imu_from_device = pose_from_json(imu.at("imu_from_device"));
    rig.imu_noise.gyro_noise_density = imu.at("gyro_noise_density").get<double>();
    rig.imu_noise.accel_noise_density = imu.at("accel_noise_density").get<double>();
    rig.imu_noise.gyro_random_walk = imu.at("gyro_random_walk").get<double>();
    rig.imu_noise.accel_random_walk = imu.at("accel_random_walk").get<double>();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, source + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kParse, source + ": " + e.what());
  }
  try {
    rig.validate();
    rig.imu_noise.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, source + ": " + e.what());
  }
  return rig;
}

void write_calibration(std::ostream& out, const RigCalibration& rig) {
  json cams = json::array();
  for (const auto& c : rig.cameras) {
    cams.push_back({{"id", c.id},
                    {"model", std::string(to_string(c.model.kind))},
                    {"fx", c.model.fx},
                    {"fy", c.model.fy},
                    {"cx", c.model.cx},
                    {"cy", c.model.cy},
                    {"width", c.model.width},
                    {"height", c.model.height},
                    {"distortion", c.model.distortion},
                    {"camera_from_device", pose_to_json(c.camera_from_device)}});
  }
  const json j = {{"cameras", cams},
                  {"imu",
                   {{"imu_from_device", pose_to_json(rig.imu_from_device)},
                    {"gyro_noise_density", rig.imu_noise.gyro_noise_density},
                    {"accel_noise_density", rig.imu_noise.accel_noise_density},
                    {"gyro_random_walk", rig.imu_noise.gyro_random_walk},
                    {"accel_random_walk", rig.imu_noise.accel_random_walk}}}};
  out << j.dump(2) << '\n';
}

RigCalibration read_calibration(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_calibration(in, path.string());
}

void write_covariance_sidecar(std::ostream& out, const Trajectory& trajectory, std::span<const Mat6> covariances) {
  if (covariances.size() != trajectory.size()) {
    throw Error(ErrorCode::kInvalidArgument, "covariance count does not match the trajectory");
  }
  out << "# timestamp_ns,c00,c01,...,c55 (upper triangle, tangent order rx ry rz tx ty tz)\n";
  for (std::size_t k = 0; k < covariances.size(); ++k) {
    out << trajectory[k].timestamp_ns;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) out << fmt(",%.9e", covariances[k](r, c));
    }
    out << '\n';
  }
}

std::vector<Mat6> parse_covariance_sidecar(std::istream& in, const std::string& source) {
  std::vector<Mat6> out;
  for_each_record(in, "", [&](std::string_view line, std::size_t n) {
    const auto f = split(line, ',');
    if (f.size() != 22) fail(source, n, "expected 22 fields, got " + std::to_string(f.size()));
    Mat6 m;
    std::size_t i = 1;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) m(r, c) = m(c, r) = to_double(f[i++], source, n, "covariance");
    }
    out.push_back(m);
  });
  return out;
}

DatasetPaths DatasetPaths::in(const std::filesystem::path& dir) {
  return {dir / "trajectory.txt", dir / "control_points.csv", dir / "detections.csv",
          dir / "imu.csv",        dir / "tracks.csv",         dir / "calibration.json"};
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  auto out = open_out(path);
  out << contents;
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

void write_dataset(const std::filesystem::path& dir, const SynthWorld& world, const SynthDetections& detections,
                   std::span<const ImuSample> imu) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  const DatasetPaths p = DatasetPaths::in(dir);
  std::ostringstream s;
  write_trajectory(s, world.trajectory);
  write_file(p.trajectory, s.str());
  s.str("");
  write_control_points(s, world.control_points);
  write_file(p.control_points, s.str());
  s.str("");
  write_detections(s, detections.control_points);
  write_file(p.detections, s.str());
  s.str("");
  write_imu(s, imu);
  write_file(p.imu, s.str());
  s.str("");
  write_tracks(s, detections.tracks);
  write_file(p.tracks, s.str());
  s.str("");
  write_calibration(s, world.rig);
  write_file(p.calibration, s.str());
}

}  // namespace cpgt::io
