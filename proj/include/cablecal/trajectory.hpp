#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cablecal/core.hpp"

namespace cablecal {

/// Joint axes along which a zig-zag sweeps continuously.
enum class Direction { J1, J2, J3, J1J2, J2J3, J1J3, J1J2J3 };

inline constexpr std::array<Direction, 7> kAllDirections = {
    Direction::J1,   Direction::J2,   Direction::J3,     Direction::J1J2,
    Direction::J2J3, Direction::J1J3, Direction::J1J2J3};

std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

/// Joints swept by the direction, e.g. {true, true, false} for J1J2.
std::array<bool, kNumJoints> direction_joints(Direction d);

/// Coordinate frame a trajectory is expressed in.
///  Centered: base raster on [-0.5, 0.5]^3.
///  Unit:     after the direction transform, inside [0, 1]^3.
///  Joint:    scaled into joint limits (deg, deg, mm).
enum class Frame { Centered, Unit, Joint };

struct Trajectory {
  std::vector<JointVector> waypoints;
  Direction direction = Direction::J1;
  double sparsity = 0.5;
  Frame frame = Frame::Centered;

  bool normalized() const { return frame != Frame::Joint; }
  std::size_t size() const { return waypoints.size(); }
};

/// Rigid part, translation, and elementwise scale of a direction transform:
/// p' = scale .* (rotation * p + translation).
struct DirectionTransform {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
  Eigen::Vector3d scale;

  Eigen::Matrix4d homogeneous() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
  Eigen::Vector3d invert(const Eigen::Vector3d& p) const;

  /// Half-width per axis of the image of the cube [-0.5, 0.5]^3. It is 0.5
  /// for every direction except J1J2J3, whose two tilts leave it short.
  Eigen::Vector3d half_extent() const;
};

DirectionTransform direction_transform(Direction d);

/// Per-joint fraction of the joint range covered by a scaled trajectory:
/// sqrt(m)/sqrt(3) on the m joints of the direction, 1/sqrt(3) elsewhere.
Eigen::Vector3d direction_span_fractions(Direction d);

inline constexpr double kDefaultStep = 1.0 / 200.0;

/// Number of raster levels per swept-over axis: ceil(1/sparsity) + 1.
int raster_levels(double sparsity);

/// Serpentine raster on [-0.5, 0.5]^3 sweeping J1 fastest, then J2, then J3.
Trajectory generate_base_zigzag(double sparsity, double step = kDefaultStep);

Trajectory rotate_to_direction(const Trajectory& base, Direction d);

/// Inverse of rotate_to_direction; maps a Unit-frame trajectory back to the base raster.
Trajectory unrotate(const Trajectory& t);

/// Interval [lo, hi] per joint the unit frame is mapped onto for direction d.
std::pair<JointVector, JointVector> direction_interval(Direction d, const JointLimits& lim);

/// Maps the unit-frame image of the base cube onto direction_interval().
Trajectory scale_to_limits(const Trajectory& t, const JointLimits& lim);

/// Brings a trajectory in any frame into joint space (centered rasters are
/// rotated to their own direction first). Joint-frame waypoints must lie
/// within `lim`.
Trajectory to_joint_frame(const Trajectory& t, const JointLimits& lim);

/// generate -> rotate -> scale in one call.
Trajectory make_calibration_trajectory(Direction d, double sparsity, const JointLimits& lim,
                                       double step = kDefaultStep);

/// Constant-speed follower speeds (deg/s, deg/s, mm/s).
struct FollowerSpeeds {
  JointVector speed{2.5, 2.5, 7.0};
};

/// Seconds to traverse the waypoints when every segment is executed as a
/// coordinated move limited by the slowest joint.
double trajectory_duration(const Trajectory& t, const FollowerSpeeds& speeds);

/// Per-axis min/max over the waypoints.
std::pair<JointVector, JointVector> bounding_box(const Trajectory& t);

/// Parses "1/4" or "0.25".
double parse_sparsity(const std::string& s);
std::string format_sparsity(double s);

std::string to_string(Frame f);
Frame parse_frame(const std::string& s);

/// Trajectory file: CSV `t_index,j1,j2,j3` plus a `<file>.json` sidecar with
/// direction, sparsity, frame, normalized and limits. `extra` keys are merged
/// into the sidecar.
void write_trajectory(const Trajectory& t, const std::filesystem::path& csv, const JointLimits& limits,
                      const nlohmann::json& extra = nlohmann::json::object());
Trajectory read_trajectory(const std::filesystem::path& csv);

}  // namespace cablecal
