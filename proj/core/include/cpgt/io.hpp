#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpgt/alignment.hpp"
#include "cpgt/fusion.hpp"
#include "cpgt/inertial.hpp"
#include "cpgt/rig.hpp"
#include "cpgt/synth.hpp"

namespace cpgt::io {

/// Parse failures throw Error(kParse) with "<source>:<line>: reason";
/// unreadable or unwritable files throw Error(kIo).
using Warnings = std::vector<std::string>;

// Trajectory: `timestamp_ns tx ty tz qx qy qz qw`, '#' comments.
Trajectory parse_trajectory(std::istream& in, const std::string& source = "<stream>", Warnings* warnings = nullptr);
void write_trajectory(std::ostream& out, const Trajectory& trajectory);
Trajectory read_trajectory(const std::filesystem::path& path, Warnings* warnings = nullptr);
void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);

// Control points: `id,dim,x,y,z,sigma_xy,sigma_z`; z and sigma_z empty for dim 2.
std::vector<ControlPoint> parse_control_points(std::istream& in, const std::string& source = "<stream>");
void write_control_points(std::ostream& out, std::span<const ControlPoint> cps);
std::vector<ControlPoint> read_control_points(const std::filesystem::path& path);

// Detections: `timestamp_ns,camera_id,cp_id,u,v`. Every detection receives
// an isotropic covariance sigma_px^2.
ObservationMap parse_detections(std::istream& in, const std::string& source = "<stream>", double sigma_px = 1.0);
void write_detections(std::ostream& out, const ObservationMap& detections);
ObservationMap read_detections(const std::filesystem::path& path, double sigma_px = 1.0);

/// Throws Error(kParse) naming the first detection whose control point or
/// camera is unknown.
void check_detections(const ObservationMap& detections, std::span<const ControlPoint> cps, const RigCalibration& rig);

// IMU: `timestamp_ns,gx,gy,gz,ax,ay,az`.
std::vector<ImuSample> parse_imu(std::istream& in, const std::string& source = "<stream>");
void write_imu(std::ostream& out, std::span<const ImuSample> samples);
std::vector<ImuSample> read_imu(const std::filesystem::path& path);

// Tracks: `track_id,timestamp_ns,camera_id,u,v`.
std::vector<FeatureTrack> parse_tracks(std::istream& in, const std::string& source = "<stream>",
                                       double sigma_px = 1.0);
void write_tracks(std::ostream& out, std::span<const FeatureTrack> tracks);
std::vector<FeatureTrack> read_tracks(const std::filesystem::path& path, double sigma_px = 1.0);

// Calibration: JSON tree with cameras, extrinsics and IMU noise.
RigCalibration parse_calibration(std::istream& in, const std::string& source = "<stream>");
void write_calibration(std::ostream& out, const RigCalibration& rig);
RigCalibration read_calibration(const std::filesystem::path& path);

/// Covariance sidecar: timestamp and the 21 upper-triangle entries per line.
void write_covariance_sidecar(std::ostream& out, const Trajectory& trajectory, std::span<const Mat6> covariances);
std::vector<Mat6> parse_covariance_sidecar(std::istream& in, const std::string& source = "<stream>");

/// File names used for a dataset directory.
struct DatasetPaths {
  std::filesystem::path trajectory, control_points, detections, imu, tracks, calibration;
  static DatasetPaths in(const std::filesystem::path& dir);
};

/// Writes every input file of a synthetic scenario into `dir`.
void write_dataset(const std::filesystem::path& dir, const SynthWorld& world, const SynthDetections& detections,
                   std::span<const ImuSample> imu);

/// Opens a file for writing, throwing Error(kIo) on failure.
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace cpgt::io
