#include "cablecal/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Geometry>

namespace cablecal {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kSqrt3 = std::numbers::sqrt3;

Eigen::Matrix3d rot(int axis, double degrees) {
  return Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, Eigen::Vector3d::Unit(axis))
      .toRotationMatrix();
}

void append_segment(std::vector<JointVector>& out, const Eigen::Vector3d& to, double step) {
  const Eigen::Vector3d from = out.back().eigen();
  const double len = (to - from).norm();
  const int pieces = std::max(1, static_cast<int>(std::ceil(len / step - 1e-12)));
  for (int k = 1; k <= pieces; ++k) {
    out.push_back(JointVector::from(from + (to - from) * (static_cast<double>(k) / pieces)));
  }
}

}  // namespace

std::string to_string(Direction d) {
  switch (d) {
    case Direction::J1: return "j1";
    case Direction::J2: return "j2";
    case Direction::J3: return "j3";
    case Direction::J1J2: return "j1j2";
    case Direction::J2J3: return "j2j3";
    case Direction::J1J3: return "j1j3";
    case Direction::J1J2J3: return "j1j2j3";
  }
  return "?";
}

Direction parse_direction(const std::string& s) {
  std::string key;
  for (char c : s)
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(c)));
  for (Direction d : kAllDirections)
    if (to_string(d) == key) return d;
  throw InvalidArgument("unknown direction '" + s + "'");
}

std::array<bool, kNumJoints> direction_joints(Direction d) {
  switch (d) {
    case Direction::J1: return {true, false, false};
    case Direction::J2: return {false, true, false};
    case Direction::J3: return {false, false, true};
    case Direction::J1J2: return {true, true, false};
    case Direction::J2J3: return {false, true, true};
    case Direction::J1J3: return {true, false, true};
    case Direction::J1J2J3: return {true, true, true};
  }
  return {false, false, false};
}

Eigen::Matrix4d DirectionTransform::homogeneous() const {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = rotation;
  h.topRightCorner<3, 1>() = translation;
  return h;
}

Eigen::Vector3d DirectionTransform::apply(const Eigen::Vector3d& p) const {
  return scale.cwiseProduct(rotation * p + translation);
}

Eigen::Vector3d DirectionTransform::half_extent() const {
  return 0.5 * scale.cwiseProduct(rotation.cwiseAbs().rowwise().sum());
}

Eigen::Vector3d DirectionTransform::invert(const Eigen::Vector3d& p) const {
  return rotation.transpose() * (p.cwiseQuotient(scale) - translation);
}

DirectionTransform direction_transform(Direction d) {
  const Eigen::Vector3d half = Eigen::Vector3d::Constant(0.5);
  const double h2 = 0.5 * kSqrt2;
  const double h3 = 0.5 * kSqrt3;
  const double s2 = 1.0 / kSqrt2;
  const double s3 = 1.0 / kSqrt3;
  switch (d) {
    case Direction::J1: return {Eigen::Matrix3d::Identity(), half, Eigen::Vector3d::Ones()};
    case Direction::J2: return {rot(2, 90.0), half, Eigen::Vector3d::Ones()};
    case Direction::J3: return {rot(1, -90.0), half, Eigen::Vector3d::Ones()};
    case Direction::J1J2: return {rot(2, 45.0), {h2, h2, 0.5}, {s2, s2, 1.0}};
    case Direction::J2J3: return {rot(0, 45.0) * rot(2, 90.0), {0.5, h2, h2}, {1.0, s2, s2}};
    case Direction::J1J3: return {rot(1, -45.0), {h2, 0.5, h2}, {s2, 1.0, s2}};
    case Direction::J1J2J3: return {rot(1, 45.0) * rot(0, 45.0), {h3, h3, h3}, {s3, s3, s3}};
  }
  throw InvalidArgument("bad direction");
}

Eigen::Vector3d direction_span_fractions(Direction d) {
  const auto joints = direction_joints(d);
  const int m = static_cast<int>(std::count(joints.begin(), joints.end(), true));
  Eigen::Vector3d k;
  for (std::size_t j = 0; j < kNumJoints; ++j)
    k[j] = joints[j] ? std::sqrt(static_cast<double>(m)) / kSqrt3 : 1.0 / kSqrt3;
  return k;
}

int raster_levels(double sparsity) {
  if (!(sparsity > 0.0) || sparsity > 0.5)
    throw InvalidArgument("invalid sparsity " + std::to_string(sparsity) + " (need 0 < s <= 1/2)");
  return static_cast<int>(std::ceil(1.0 / sparsity - 1e-9)) + 1;
}

Trajectory generate_base_zigzag(double sparsity, double step) {
  const int n = raster_levels(sparsity);
  if (!(step > 0.0)) throw InvalidArgument("waypoint step must be > 0");
  const double gap = 1.0 / (n - 1);

  Trajectory t;
  t.direction = Direction::J1;
  t.sparsity = sparsity;
  t.frame = Frame::Centered;
  t.waypoints.push_back({-0.5, -0.5, -0.5});

  // Serpentine: J1 alternates per pass, J2 alternates per plane.
  double j1_end = 0.5;
  for (int plane = 0; plane < n; ++plane) {
    const double j3 = -0.5 + plane * gap;
    if (plane > 0) {
      const auto& p = t.waypoints.back();
      append_segment(t.waypoints, {p[0], p[1], j3}, step);
    }
    const bool j2_up = plane % 2 == 0;
    for (int level = 0; level < n; ++level) {
      const double j2 = j2_up ? -0.5 + level * gap : 0.5 - level * gap;
      if (level > 0) {
        const auto& p = t.waypoints.back();
        append_segment(t.waypoints, {p[0], j2, j3}, step);
      }
      append_segment(t.waypoints, {j1_end, j2, j3}, step);
      j1_end = -j1_end;
    }
  }
  return t;
}

Trajectory rotate_to_direction(const Trajectory& base, Direction d) {
  if (base.frame != Frame::Centered || base.direction != Direction::J1)
    throw PreconditionError("rotate_to_direction expects a centered J1 base raster");
  for (const auto& w : base.waypoints)
    for (double x : w.v)
      if (!(x >= -0.5 - 1e-12 && x <= 0.5 + 1e-12))
        throw PreconditionError("base raster waypoint outside [-0.5, 0.5]");

  const DirectionTransform tf = direction_transform(d);
  Trajectory out;
  out.direction = d;
  out.sparsity = base.sparsity;
  out.frame = Frame::Unit;
  out.waypoints.reserve(base.size());
  for (const auto& w : base.waypoints) {
    Eigen::Vector3d p = tf.apply(w.eigen());
    // Rounding can leave -1e-17 at a cube corner.
    for (int i = 0; i < 3; ++i) p[i] = std::clamp(p[i], 0.0, 1.0);
    out.waypoints.push_back(JointVector::from(p));
  }
  return out;
}

Trajectory unrotate(const Trajectory& t) {
  if (t.frame != Frame::Unit) throw PreconditionError("unrotate expects a unit-frame trajectory");
  const DirectionTransform tf = direction_transform(t.direction);
  Trajectory out;
  out.direction = Direction::J1;
  out.sparsity = t.sparsity;
  out.frame = Frame::Centered;
  out.waypoints.reserve(t.size());
  for (const auto& w : t.waypoints) out.waypoints.push_back(JointVector::from(tf.invert(w.eigen())));
  return out;
}

std::pair<JointVector, JointVector> direction_interval(Direction d, const JointLimits& lim) {
  const Eigen::Vector3d k = direction_span_fractions(d);
  const JointVector c = lim.center();
  const JointVector r = lim.range();
  JointVector lo, hi;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    lo[j] = c[j] - 0.5 * k[j] * r[j];
    hi[j] = c[j] + 0.5 * k[j] * r[j];
  }
  return {lo, hi};
}

Trajectory scale_to_limits(const Trajectory& t, const JointLimits& lim) {
  if (t.frame != Frame::Unit) throw PreconditionError("scale_to_limits expects a unit-frame trajectory");
  const Eigen::Vector3d k = direction_span_fractions(t.direction);
  const Eigen::Vector3d e = direction_transform(t.direction).half_extent();
  const JointVector c = lim.center();
  const JointVector r = lim.range();

  Trajectory out;
  out.direction = t.direction;
  out.sparsity = t.sparsity;
  out.frame = Frame::Joint;
  out.waypoints.reserve(t.size());
  for (const auto& w : t.waypoints) {
    JointVector q;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (!(w[j] >= 0.0 && w[j] <= 1.0))
        throw PreconditionError("scale_to_limits: waypoint outside [0, 1]");
      // The clamp only absorbs rounding where a span reaches the limits.
      q[j] = std::clamp(c[j] + k[j] * r[j] * (w[j] - 0.5) / (2.0 * e[j]), lim.min()[j], lim.max()[j]);
    }
    out.waypoints.push_back(q);
  }
  return out;
}

Trajectory make_calibration_trajectory(Direction d, double sparsity, const JointLimits& lim,
                                       double step) {
  return scale_to_limits(rotate_to_direction(generate_base_zigzag(sparsity, step), d), lim);
}

double trajectory_duration(const Trajectory& t, const FollowerSpeeds& speeds) {
  if (t.waypoints.size() < 2) return 0.0;
  if (t.frame != Frame::Joint) throw PreconditionError("trajectory_duration expects joint-space waypoints");
  for (double s : speeds.speed.v)
    if (!(s > 0.0)) throw InvalidArgument("follower speeds must be > 0");
  double total = 0.0;
  for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
    double seg = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j)
      seg = std::max(seg, std::abs(t.waypoints[i][j] - t.waypoints[i - 1][j]) / speeds.speed[j]);
    total += seg;
  }
  return total;
}

std::pair<JointVector, JointVector> bounding_box(const Trajectory& t) {
  if (t.waypoints.empty()) throw PreconditionError("bounding_box of an empty trajectory");
  JointVector lo = t.waypoints.front(), hi = t.waypoints.front();
  for (const auto& w : t.waypoints) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      lo[j] = std::min(lo[j], w[j]);
      hi[j] = std::max(hi[j], w[j]);
    }
  }
  return {lo, hi};
}

double parse_sparsity(const std::string& s) {
  auto parse = [&](std::string_view part) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size())
      throw InvalidArgument("bad sparsity '" + s + "'");
    return v;
  };
  const auto slash = s.find('/');
  double v = slash == std::string::npos
                 ? parse(s)
                 : parse(std::string_view(s).substr(0, slash)) / parse(std::string_view(s).substr(slash + 1));
  raster_levels(v);
  return v;
}

std::string format_sparsity(double s) {
  const double inv = 1.0 / s;
  if (std::abs(inv - std::round(inv)) < 1e-9) return "1/" + std::to_string(static_cast<int>(std::round(inv)));
  return std::to_string(s);
}

Trajectory to_joint_frame(const Trajectory& t, const JointLimits& lim) {
  switch (t.frame) {
    case Frame::Joint:
      for (const auto& w : t.waypoints)
        if (!lim.contains(w, 1e-9)) throw LimitViolation("trajectory waypoint outside the joint limits");
      return t;
    case Frame::Unit: return scale_to_limits(t, lim);
    case Frame::Centered: return scale_to_limits(rotate_to_direction(t, t.direction), lim);
  }
  return t;
}

std::string to_string(Frame f) {
  switch (f) {
    case Frame::Centered: return "centered";
    case Frame::Unit: return "unit";
    case Frame::Joint: return "joint";
  }
  return "?";
}

Frame parse_frame(const std::string& s) {
  if (s == "centered") return Frame::Centered;
  if (s == "unit") return Frame::Unit;
  if (s == "joint") return Frame::Joint;
  throw InvalidArgument("unknown trajectory frame '" + s + "'");
}

namespace {

std::filesystem::path trajectory_sidecar(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p += ".json";
  return p;
}

}  // namespace

void write_trajectory(const Trajectory& t, const std::filesystem::path& csv, const JointLimits& limits,
                      const nlohmann::json& extra) {
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  {
    std::ofstream out(csv);
    if (!out) throw FormatError("cannot write " + csv.string());
    out << "t_index,j1,j2,j3\n";
    for (std::size_t i = 0; i < t.waypoints.size(); ++i) {
      const auto& w = t.waypoints[i];
      out << i << ',' << format_double(w[0]) << ',' << format_double(w[1]) << ',' << format_double(w[2]) << '\n';
    }
  }
  nlohmann::json j{{"version", 1},
                   {"direction", to_string(t.direction)},
                   {"sparsity", format_sparsity(t.sparsity)},
                   {"sparsity_value", t.sparsity},
                   {"frame", to_string(t.frame)},
                   {"normalized", t.normalized()},
                   {"limits", limits_to_json(limits)},
                   {"waypoints", t.waypoints.size()}};
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream side(trajectory_sidecar(csv));
  if (!side) throw FormatError("cannot write " + trajectory_sidecar(csv).string());
  side << j.dump(2) << '\n';
}

Trajectory read_trajectory(const std::filesystem::path& csv) {
  std::ifstream side(trajectory_sidecar(csv));
  if (!side) throw FormatError("missing trajectory sidecar " + trajectory_sidecar(csv).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(trajectory_sidecar(csv).string() + ": " + e.what());
  }
  if (j.value("version", 0) != 1) throw FormatError("trajectory: unsupported version");
  Trajectory t;
  t.direction = parse_direction(j.at("direction").get<std::string>());
  t.sparsity = j.at("sparsity_value").get<double>();
  t.frame = parse_frame(j.at("frame").get<std::string>());

  std::ifstream in(csv);
  if (!in) throw FormatError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "t_index,j1,j2,j3") throw FormatError(csv.string() + ": bad header");
  std::size_t expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<std::string_view, 4> f;
    std::string_view rest = line;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto comma = rest.find(',');
      if ((k < 3) == (comma == std::string_view::npos)) throw FormatError(csv.string() + ": wrong field count");
      f[k] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
    }
    if (parse_double(f[0]) != static_cast<double>(expect++)) throw FormatError(csv.string() + ": t_index out of order");
    t.waypoints.push_back({parse_double(f[1]), parse_double(f[2]), parse_double(f[3])});
  }
  if (j.contains("waypoints") && j.at("waypoints").get<std::size_t>() != t.waypoints.size())
    throw FormatError(csv.string() + ": waypoint count does not match sidecar");
  return t;
}

}  // namespace cablecal
