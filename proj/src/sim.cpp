#include "cablecal/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace cablecal {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kHomingStream = 0x686f6d696e67ULL;

// Motor-side transmission: counts per joint unit and joint -> motor coupling.
constexpr std::array<double, feature::kArm> kTransmission{28.6, 28.6, 11.4, 12.0, 12.0, 12.0, 12.0, 8.0};
constexpr double kCoupling21 = 0.35;  // motor 2 also winds with joint 1
constexpr double kCountsPerMotorUnit = 1000.0;
constexpr double kTorqueConstant = 0.0458;
constexpr double kDacPerAmp = 160.0;

double ext3(const JointLimits& lim, double q3) { return (q3 - lim.min()[2]) / lim.range()[2]; }

std::array<double, kNumJoints> gravity_shape(const JointLimits& lim, const JointVector& q) {
  const double e = ext3(lim, q[2]);
  return {(0.6 + 0.8 * e) * std::cos(q[0] * kDeg), (0.6 + 0.8 * e) * std::sin(q[1] * kDeg),
          std::cos(q[1] * kDeg)};
}

// Remote-center spherical arm: tool axis Rz(q1) Ry(q2) e_z, insertion q3 along it.
Eigen::Matrix3d tool_rotation(const JointVector& q) {
  return (Eigen::AngleAxisd(q[0] * kDeg, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(q[1] * kDeg, Eigen::Vector3d::UnitY()))
      .toRotationMatrix();
}

Eigen::Matrix3d position_jacobian(const JointVector& q) {
  const double c1 = std::cos(q[0] * kDeg), s1 = std::sin(q[0] * kDeg);
  const double c2 = std::cos(q[1] * kDeg), s2 = std::sin(q[1] * kDeg);
  const double d = q[2];
  Eigen::Matrix3d j;
  // p = d (s2 c1, s2 s1, c2); columns per joint with angles in degrees.
  j << -d * s2 * s1 * kDeg, d * c2 * c1 * kDeg, s2 * c1,  //
      d * s2 * c1 * kDeg, d * c2 * s1 * kDeg, s2 * s1,    //
      0.0, -d * s2 * kDeg, c2;
  return j;
}

void write_pose(std::vector<double>& f, std::size_t at, const JointVector& q) {
  const Eigen::Matrix3d r = tool_rotation(q);
  const Eigen::Vector3d p = r * Eigen::Vector3d(0.0, 0.0, q[2]);
  for (int i = 0; i < 3; ++i) f[at + i] = p[i];
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) f[at + 3 + 3 * i + k] = r(i, k);
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream)));
}

// ---------------------------------------------------------------------------

CableErrorModel CableErrorModel::defaults() {
  CableErrorModel m;
  auto& j1 = m.joints[0];
  j1.offset = 1.75;
  j1.position_gain = {0.022, 0.004, 0.0006};
  j1.torque_gain = {0.55, 0.05, 0.0};
  j1.curvature = 0.18;
  j1.hysteresis_width = 0.22;
  j1.drift_rate_unloaded = 0.09;
  j1.drift_rate_loaded = 0.16;
  j1.noise_sd = 0.03;
  j1.homing_offset_sd = 0.01;

  auto& j2 = m.joints[1];
  j2.offset = 7.9;
  j2.position_gain = {0.003, 0.03, 0.0005};
  j2.torque_gain = {0.03, 0.6, 0.05};
  j2.curvature = 0.22;
  j2.hysteresis_width = 0.25;
  j2.drift_rate_unloaded = 0.05;
  j2.drift_rate_loaded = 0.07;
  j2.noise_sd = 0.03;
  j2.homing_offset_sd = 0.03;
  j2.homing_offset_shift = 0.11;

  auto& j3 = m.joints[2];
  j3.offset = 11.7;
  j3.position_gain = {0.001, 0.003, 0.005};
  j3.torque_gain = {0.0, 0.08, 0.35};
  j3.curvature = 0.3;
  j3.hysteresis_width = 0.1;
  j3.drift_rate_unloaded = 0.02;
  j3.drift_rate_loaded = 0.027;
  j3.noise_sd = 0.02;
  j3.homing_offset_sd = 0.01;
  return m;
}

CableErrorModel CableErrorModel::identity() {
  CableErrorModel m;
  m.torque = TorqueModel{};
  return m;
}

CableErrorModel CableErrorModel::linear_only() {
  CableErrorModel m = defaults();
  for (auto& j : m.joints) {
    j.curvature = 0.0;
    j.hysteresis_width = 0.0;
    j.drift_rate_idle = j.drift_rate_unloaded = j.drift_rate_loaded = 0.0;
    j.noise_sd = 0.0;
    j.homing_offset_sd = j.homing_offset_shift = 0.0;
  }
  return m;
}

namespace {

template <std::size_t N>
nlohmann::json arr(const std::array<double, N>& a) {
  return nlohmann::json(a);
}

template <std::size_t N>
void read(const nlohmann::json& j, const char* key, std::array<double, N>& a) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != N)
    throw FormatError(std::string("error model: '") + key + "' needs " + std::to_string(N) + " entries");
  for (std::size_t i = 0; i < N; ++i) a[i] = v[i].get<double>();
}

void read(const nlohmann::json& j, const char* key, double& x) {
  if (j.contains(key)) x = j.at(key).get<double>();
}

}  // namespace

nlohmann::json to_json(const CableErrorModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["rng_seed"] = m.rng_seed;
  j["reference_load_g"] = m.reference_load_g;
  j["homing_count"] = m.homing_count;
  j["registration"] = arr(m.registration);
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const auto& p = m.joints[i];
    j["j" + std::to_string(i + 1)] = {
        {"offset", p.offset},
        {"position_gain", arr(p.position_gain)},
        {"torque_gain", arr(p.torque_gain)},
        {"curvature", p.curvature},
        {"hysteresis_width", p.hysteresis_width},
        {"drift_rate_idle", p.drift_rate_idle},
        {"drift_rate_unloaded", p.drift_rate_unloaded},
        {"drift_rate_loaded", p.drift_rate_loaded},
        {"noise_sd", p.noise_sd},
        {"homing_offset_sd", p.homing_offset_sd},
        {"homing_offset_shift", p.homing_offset_shift},
    };
  }
  const auto& t = m.torque;
  j["torque"] = {{"gravity", arr(t.gravity)},       {"load_factor", arr(t.load_factor)},
                 {"coulomb", arr(t.coulomb)},       {"coulomb_velocity", arr(t.coulomb_velocity)},
                 {"viscous", arr(t.viscous)},       {"noise_sd", arr(t.noise_sd)},
                 {"wrist_torque", arr(t.wrist_torque)}, {"wrist_noise_sd", t.wrist_noise_sd}};
  return j;
}

CableErrorModel error_model_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known_joint_keys = {
      "offset",          "position_gain",       "torque_gain",       "curvature",
      "hysteresis_width", "drift_rate_idle",    "drift_rate_unloaded", "drift_rate_loaded",
      "noise_sd",        "homing_offset_sd",    "homing_offset_shift"};
  static const std::vector<std::string> known_top_keys = {
      "version", "rng_seed", "reference_load_g", "homing_count", "registration", "j1", "j2", "j3", "torque"};
  if (!j.is_object()) throw FormatError("error model must be a table");
  for (const auto& [k, _] : j.items())
    if (std::find(known_top_keys.begin(), known_top_keys.end(), k) == known_top_keys.end())
      throw FormatError("error model: unknown key '" + k + "'");
  CableErrorModel m = CableErrorModel::defaults();
  if (j.contains("version") && j.at("version").get<int>() != 1)
    throw FormatError("error model: unsupported version");
  if (j.contains("rng_seed")) m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  read(j, "reference_load_g", m.reference_load_g);
  if (j.contains("homing_count")) m.homing_count = j.at("homing_count").get<int>();
  read(j, "registration", m.registration);
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const std::string key = "j" + std::to_string(i + 1);
    if (!j.contains(key)) continue;
    const auto& s = j.at(key);
    for (const auto& [k, _] : s.items())
      if (std::find(known_joint_keys.begin(), known_joint_keys.end(), k) == known_joint_keys.end())
        throw FormatError("error model: unknown key '" + key + "." + k + "'");
    auto& p = m.joints[i];
    read(s, "offset", p.offset);
    read(s, "position_gain", p.position_gain);
    read(s, "torque_gain", p.torque_gain);
    read(s, "curvature", p.curvature);
    read(s, "hysteresis_width", p.hysteresis_width);
    read(s, "drift_rate_idle", p.drift_rate_idle);
    read(s, "drift_rate_unloaded", p.drift_rate_unloaded);
    read(s, "drift_rate_loaded", p.drift_rate_loaded);
    read(s, "noise_sd", p.noise_sd);
    read(s, "homing_offset_sd", p.homing_offset_sd);
    read(s, "homing_offset_shift", p.homing_offset_shift);
  }
  if (j.contains("torque")) {
    static const std::vector<std::string> known_torque_keys = {
        "gravity", "load_factor", "coulomb", "coulomb_velocity", "viscous", "noise_sd", "wrist_torque", "wrist_noise_sd"};
    const auto& t = j.at("torque");
    for (const auto& [k, _] : t.items())
      if (std::find(known_torque_keys.begin(), known_torque_keys.end(), k) == known_torque_keys.end())
        throw FormatError("error model: unknown key 'torque." + k + "'");
    read(t, "gravity", m.torque.gravity);
    read(t, "load_factor", m.torque.load_factor);
    read(t, "coulomb", m.torque.coulomb);
    read(t, "coulomb_velocity", m.torque.coulomb_velocity);
    read(t, "viscous", m.torque.viscous);
    read(t, "noise_sd", m.torque.noise_sd);
    read(t, "wrist_torque", m.torque.wrist_torque);
    read(t, "wrist_noise_sd", m.torque.wrist_noise_sd);
  }
  return m;
}

CableErrorModel apply_homing(const CableErrorModel& m) {
  CableErrorModel out = m;
  auto rng = make_rng(m.rng_seed, kHomingStream + static_cast<std::uint64_t>(m.homing_count) + 1);
  std::normal_distribution<double> n01;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const auto& p = m.joints[j];
    const double draw = n01(rng);
    const double delta = p.homing_offset_shift + (p.homing_offset_sd > 0.0 ? p.homing_offset_sd * draw : 0.0);
    out.joints[j].offset += delta;
    out.registration[j] += delta;
  }
  out.homing_count = m.homing_count + 1;
  return out;
}

// ---------------------------------------------------------------------------

LoadProfile::LoadProfile(std::vector<LoadInterval> intervals) {
  for (const auto& iv : intervals) append(iv);
}

LoadProfile LoadProfile::constant(double duration_s, double mass_g, bool idle) {
  return LoadProfile({{0.0, duration_s, mass_g, idle}});
}

void LoadProfile::append(const LoadInterval& iv) {
  if (!(iv.end >= iv.begin)) throw InvalidArgument("load interval ends before it begins");
  if (iv.mass_g < 0.0) throw InvalidArgument("load mass must be >= 0");
  if (!intervals_.empty() && std::abs(iv.begin - intervals_.back().end) > 1e-9)
    throw InvalidArgument("load intervals must be contiguous and non-overlapping");
  if (intervals_.empty() && std::abs(iv.begin) > 1e-9)
    throw InvalidArgument("load profile must start at t = 0");
  intervals_.push_back(iv);
}

const LoadInterval& LoadProfile::at(double t) const {
  if (intervals_.empty()) throw PreconditionError("empty load profile");
  for (const auto& iv : intervals_)
    if (t < iv.end) return iv;
  return intervals_.back();
}

double drift_rate(const LoadInterval& iv, const JointErrorParams& p, double reference_load_g) {
  if (iv.idle) return p.drift_rate_idle;
  return p.drift_rate_unloaded +
         (p.drift_rate_loaded - p.drift_rate_unloaded) * (iv.mass_g / reference_load_g);
}

double LoadProfile::drift(double t, const JointErrorParams& p, double reference_load_g,
                          double time_scale) const {
  double acc = 0.0;
  for (const auto& iv : intervals_) {
    if (t <= iv.begin) break;
    const double span = std::min(t, iv.end) - iv.begin;
    acc += drift_rate(iv, p, reference_load_g) * span * time_scale / 3600.0;
  }
  // Past the schedule the last interval keeps accruing.
  if (!intervals_.empty() && t > intervals_.back().end)
    acc += drift_rate(intervals_.back(), p, reference_load_g) * (t - intervals_.back().end) *
           time_scale / 3600.0;
  return acc;
}

// ---------------------------------------------------------------------------

TrajectoryFollower::TrajectoryFollower(const Trajectory& traj, const FollowerSpeeds& speeds)
    : TrajectoryFollower(traj, speeds, traj.waypoints.empty() ? JointVector{} : traj.waypoints.front()) {}

TrajectoryFollower::TrajectoryFollower(const Trajectory& traj, const FollowerSpeeds& speeds,
                                       const JointVector& start) {
  if (traj.frame != Frame::Joint) throw PreconditionError("follower needs a joint-space trajectory");
  if (traj.waypoints.empty()) throw PreconditionError("follower needs a non-empty trajectory");
  for (double s : speeds.speed.v)
    if (!(s > 0.0)) throw InvalidArgument("follower speeds must be > 0");
  points_.push_back(start);
  times_.push_back(0.0);
  for (const auto& w : traj.waypoints) {
    double dt = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j)
      dt = std::max(dt, std::abs(w[j] - points_.back()[j]) / speeds.speed[j]);
    if (dt <= 0.0) continue;
    points_.push_back(w);
    times_.push_back(times_.back() + dt);
  }
}

std::size_t TrajectoryFollower::segment(double t) const {
  if (times_.size() < 2) return 0;
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t i = static_cast<std::size_t>(std::distance(times_.begin(), it));
  if (i == 0) return 0;
  return std::min(i - 1, times_.size() - 2);
}

JointVector TrajectoryFollower::position(double t) const {
  if (times_.size() < 2) return points_.front();
  t = std::clamp(t, 0.0, times_.back());
  const std::size_t i = segment(t);
  const double a = (t - times_[i]) / (times_[i + 1] - times_[i]);
  return points_[i] + a * (points_[i + 1] - points_[i]);
}

JointVector TrajectoryFollower::velocity(double t) const {
  if (times_.size() < 2 || t < 0.0 || t >= times_.back()) return {};
  const std::size_t i = segment(t);
  return (1.0 / (times_[i + 1] - times_[i])) * (points_[i + 1] - points_[i]);
}

RandomSinusoidPolicy::RandomSinusoidPolicy(const JointLimits& limits, const RandomMotionConfig& cfg,
                                           double duration_s, std::uint64_t seed, const JointVector& start)
    : duration_(duration_s) {
  if (!(duration_s >= 0.0)) throw InvalidArgument("random motion duration must be >= 0");
  if (!(cfg.range_fraction > 0.0 && cfg.range_fraction <= 1.0))
    throw InvalidArgument("random motion range_fraction must be in (0, 1]");
  const JointVector c = limits.center();
  const JointVector r = limits.range();
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (!(cfg.min_speed[j] > 0.0 && cfg.max_speed[j] >= cfg.min_speed[j]))
      throw InvalidArgument("random motion speed range invalid");
    auto rng = make_rng(seed, 0x72616e64ULL + j);
    std::uniform_real_distribution<double> target(c[j] - 0.5 * cfg.range_fraction * r[j],
                                                  c[j] + 0.5 * cfg.range_fraction * r[j]);
    std::uniform_real_distribution<double> speed(cfg.min_speed[j], cfg.max_speed[j]);
    double t = 0.0;
    double at = start[j];
    while (t <= duration_s) {
      const double to = target(rng);
      const double v = speed(rng);
      // Half-cosine profile: peak speed = pi/2 * |dq| / T.
      const double seg = std::max(cfg.min_segment_s, std::numbers::pi * std::abs(to - at) / (2.0 * v));
      segs_[j].push_back({t, t + seg, at, to});
      max_speed_[j] = std::max(max_speed_[j], std::numbers::pi * std::abs(to - at) / (2.0 * seg));
      t += seg;
      at = to;
    }
  }
}

const RandomSinusoidPolicy::Segment& RandomSinusoidPolicy::find(std::size_t j, double t) const {
  const auto& s = segs_[j];
  auto it = std::upper_bound(s.begin(), s.end(), t, [](double x, const Segment& g) { return x < g.t0; });
  return it == s.begin() ? s.front() : *std::prev(it);
}

JointVector RandomSinusoidPolicy::position(double t) const {
  t = std::clamp(t, 0.0, duration_);
  JointVector q;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Segment& g = find(j, t);
    const double a = std::clamp((t - g.t0) / (g.t1 - g.t0), 0.0, 1.0);
    q[j] = g.from + (g.to - g.from) * 0.5 * (1.0 - std::cos(std::numbers::pi * a));
  }
  return q;
}

JointVector RandomSinusoidPolicy::velocity(double t) const {
  if (t < 0.0 || t > duration_) return {};
  JointVector v;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Segment& g = find(j, t);
    const double T = g.t1 - g.t0;
    const double a = std::clamp((t - g.t0) / T, 0.0, 1.0);
    v[j] = (g.to - g.from) * 0.5 * std::numbers::pi / T * std::sin(std::numbers::pi * a);
  }
  return v;
}

// ---------------------------------------------------------------------------

const FeatureSchema& default_feature_schema() {
  static const FeatureSchema schema = [] {
    const std::array<std::string, feature::kArm> arm = {"1", "2", "3", "4", "5", "6", "7", "grasp"};
    std::vector<std::string> names;
    auto block = [&](const std::string& prefix) {
      for (const auto& a : arm) names.push_back(prefix + "_" + a);
    };
    block("jpos");
    block("mtorque");
    for (const char* n : {"time_stamp", "run_level", "sublevel", "last_seq", "arm_type", "grasp_desired"})
      names.emplace_back(n);
    block("enc_val");
    block("enc_offset");
    block("mpos");
    block("mvel");
    block("jvel");
    block("jpos_d");
    block("mpos_d");
    block("mcurrent");
    block("dac");
    block("jpos_err");
    for (const char* prefix : {"ee", "ee_d"}) {
      for (const char* c : {"x", "y", "z"}) names.push_back(std::string(prefix) + "_" + c);
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
          names.push_back(std::string(prefix) + "_r" + std::to_string(i) + std::to_string(k));
    }
    for (const char* c : {"vx", "vy", "vz", "wx", "wy", "wz"}) names.push_back(std::string("jac_") + c);
    for (const char* c : {"fx", "fy", "fz", "mx", "my", "mz"}) names.push_back(std::string("jac_") + c);
    std::vector<bool> mask(names.size(), false);
    for (std::size_t i = 0; i < feature::kDimSelected; ++i) mask[i] = true;
    return FeatureSchema(std::move(names), std::move(mask));
  }();
  return schema;
}

std::array<double, kNumJoints> torque_proxy(const TorqueModel& tm, const JointLimits& lim,
                                            const JointVector& q, const JointVector& v, double load_g,
                                            double reference_load_g) {
  const auto shape = gravity_shape(lim, q);
  std::array<double, kNumJoints> tau{};
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    tau[j] = tm.gravity[j] * (1.0 + tm.load_factor[j] * load_g / reference_load_g) * shape[j] +
             tm.coulomb[j] * std::tanh(v[j] / tm.coulomb_velocity[j]) + tm.viscous[j] * v[j];
  }
  return tau;
}

JointVector deterministic_error(const CableErrorModel& m, const JointLimits& lim, const JointVector& q,
                                const std::array<double, kNumJoints>& tau) {
  const JointVector c = lim.center();
  const JointVector r = lim.range();
  JointVector e;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const auto& p = m.joints[j];
    double x = p.offset;
    for (std::size_t k = 0; k < kNumJoints; ++k) x += p.position_gain[k] * (q[k] - c[k]) + p.torque_gain[k] * tau[k];
    const double u = (q[j] - c[j]) / (0.5 * r[j]);
    x += p.curvature * u * u;
    e[j] = x;
  }
  return e;
}

namespace {

class Engine {
 public:
  Engine(const CableErrorModel& m, const JointLimits& lim, const SessionOptions& opts)
      : model_(m), lim_(lim), opts_(opts), rng_(make_rng(opts.seed ^ splitmix64(m.rng_seed), kNoiseStream)) {
    if (!(opts.state_hz > 0.0) || !(opts.truth_hz > 0.0) || !(opts.physics_hz > 0.0))
      throw InvalidArgument("sample rates must be positive");
    if (!(opts.time_scale > 0.0)) throw InvalidArgument("time_scale must be positive");
    out_.final_model = m;
  }

  void set_load(LoadProfile load) { out_.load = std::move(load); }

  void homing(const JointVector& q) {
    model_ = apply_homing(model_);
    backlash_ = q.v;
  }

  void start(const JointVector& q) {
    backlash_ = q.v;
    started_ = true;
  }

  // Runs one policy occupying [t0, t0 + policy.duration()).
  void run(const MotionPolicy& policy, double t0, bool record, const std::string& label) {
    const double t1 = t0 + policy.duration();
    if (!started_) start(policy.position(0.0));
    if (!record) {
      check_limits(policy.end_position(), t1);
      step_backlash(policy.end_position());
      last_t_ = t1;
      return;
    }
    const LoadInterval& li = out_.load.at(t0);
    out_.spans.push_back({label, t0, t1, model_.homing_count, li.mass_g, li.idle});

    last_t_ = t0;
    const auto first = [&](double hz) { return static_cast<long long>(std::ceil(t0 * hz - 1e-9)); };
    for (long long m = first(opts_.truth_hz);; ++m) {
      const double t = static_cast<double>(m) / opts_.truth_hz;
      if (t >= t1 - 1e-12) break;
      const JointVector q = policy.position(t - t0);
      check_limits(q, t);
      out_.truth.push_back({t, q});
    }
    for (long long k = first(opts_.state_hz);; ++k) {
      const double t = static_cast<double>(k) / opts_.state_hz;
      if (t >= t1 - 1e-12) break;
      advance_backlash(policy, t0, t);
      const JointVector q = policy.position(t - t0);
      check_limits(q, t);
      out_.states.push_back(make_state(t, q, policy.velocity(t - t0), out_.load.at(t)));
    }
    advance_backlash(policy, t0, t1);
  }

  SessionResult finish(double duration) {
    out_.final_model = model_;
    out_.duration = duration;
    return std::move(out_);
  }

 private:
  void check_limits(const JointVector& q, double t) const {
    const JointVector r = lim_.range();
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (q[j] < lim_.min()[j] - 1e-9 * r[j] || q[j] > lim_.max()[j] + 1e-9 * r[j])
        throw LimitViolation("motion leaves joint " + std::to_string(j + 1) + " limits at t = " +
                             std::to_string(t) + " s (q = " + std::to_string(q[j]) + ")");
    }
  }

  void step_backlash(const JointVector& q) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double w = model_.joints[j].hysteresis_width;
      backlash_[j] = std::clamp(backlash_[j], q[j] - w, q[j] + w);
    }
  }

  void advance_backlash(const MotionPolicy& policy, double t0, double t) {
    const double h = 1.0 / opts_.physics_hz;
    double s = last_t_;
    while (s + h < t - 1e-12) {
      s += h;
      step_backlash(policy.position(s - t0));
    }
    step_backlash(policy.position(t - t0));
    last_t_ = t;
  }

  double gauss(double sd) { return sd > 0.0 ? sd * n01_(rng_) : (n01_(rng_), 0.0); }

  RobotState make_state(double t, const JointVector& q, const JointVector& v, const LoadInterval& li) {
    namespace F = feature;
    RobotState s;
    s.timestamp = t;
    s.features.assign(F::kDimFull, 0.0);
    auto& f = s.features;

    std::array<double, kNumJoints> tau =
        torque_proxy(model_.torque, lim_, q, v, li.mass_g, model_.reference_load_g);
    for (std::size_t j = 0; j < kNumJoints; ++j) tau[j] += gauss(model_.torque.noise_sd[j]);
    s.motor_torques = tau;

    const JointVector e = deterministic_error(model_, lim_, q, tau);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const auto& p = model_.joints[j];
      const double drift = out_.load.drift(t, p, model_.reference_load_g, opts_.time_scale);
      s.reported[j] = q[j] + e[j] + drift + (q[j] - backlash_[j]) + gauss(p.noise_sd);
    }

    std::array<double, F::kArm> jpos{}, torque{}, jvel{};
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      jpos[j] = s.reported[j];
      torque[j] = tau[j];
    }
    for (std::size_t w = 0; w < 5; ++w) {
      jpos[3 + w] = opts_.wrist_positions[w];
      torque[3 + w] = model_.torque.wrist_torque[w] + gauss(model_.torque.wrist_noise_sd);
    }
    for (std::size_t i = 0; i < F::kArm; ++i) {
      f[F::kJointPos + i] = jpos[i];
      f[F::kMotorTorque + i] = torque[i];
    }

    if (opts_.aux_mode == AuxMode::Noise) {
      for (std::size_t i = F::kDimSelected; i < F::kDimFull; ++i) f[i] = n01_(rng_);
      return s;
    }

    f[F::kTimestamp] = t;
    f[F::kRunLevel] = li.idle ? 1.0 : 3.0;
    f[F::kSublevel] = 0.0;
    f[F::kLastSeq] = std::floor(t * 1000.0);
    f[F::kArmType] = 0.0;
    f[F::kGraspDesired] = opts_.wrist_positions[4];

    for (std::size_t j = 0; j < kNumJoints; ++j)
      jvel[j] = v[j] * (1.0 + model_.joints[j].position_gain[j]) + gauss(0.05);

    auto motor = [&](const std::array<double, F::kArm>& joint) {
      std::array<double, F::kArm> m{};
      for (std::size_t i = 0; i < F::kArm; ++i) m[i] = kTransmission[i] * joint[i];
      m[1] += kCoupling21 * kTransmission[1] * joint[0];
      return m;
    };
    const auto mpos = motor(jpos);
    const auto mvel = motor(jvel);
    std::array<double, F::kArm> jpos_d{};
    for (std::size_t i = 0; i < F::kArm; ++i) jpos_d[i] = jpos[i] + 0.001 * jvel[i] + gauss(0.002);
    const auto mpos_d = motor(jpos_d);

    for (std::size_t i = 0; i < F::kArm; ++i) {
      const double reg = i < kNumJoints ? model_.registration[i] : 0.0;
      const double enc_offset = 1000.0 * static_cast<double>(i + 1) - kCountsPerMotorUnit * kTransmission[i] * reg;
      const double current = torque[i] / kTorqueConstant;
      f[F::kEncoderOffset + i] = enc_offset;
      f[F::kEncoderValue + i] = enc_offset + kCountsPerMotorUnit * mpos[i];
      f[F::kMotorPos + i] = mpos[i];
      f[F::kMotorVel + i] = mvel[i];
      f[F::kJointVel + i] = jvel[i];
      f[F::kJointPosDesired + i] = jpos_d[i];
      f[F::kMotorPosDesired + i] = mpos_d[i];
      f[F::kMotorCurrent + i] = current;
      f[F::kDac + i] = kDacPerAmp * current + gauss(0.5);
      f[F::kJointPosError + i] = jpos_d[i] - jpos[i];
    }

    const JointVector qr{jpos[0], jpos[1], jpos[2]};
    const JointVector qd{jpos_d[0], jpos_d[1], jpos_d[2]};
    write_pose(f, F::kEePose, qr);
    write_pose(f, F::kEePoseDesired, qd);

    const Eigen::Matrix3d jac = position_jacobian(qr);
    const Eigen::Vector3d lin = jac * Eigen::Vector3d(jvel[0], jvel[1], jvel[2]);
    const Eigen::Vector3d ang = Eigen::Vector3d::UnitZ() * (jvel[0] * kDeg) +
                                Eigen::AngleAxisd(qr[0] * kDeg, Eigen::Vector3d::UnitZ()) *
                                    Eigen::Vector3d::UnitY() * (jvel[1] * kDeg);
    const Eigen::Vector3d force = jac * Eigen::Vector3d(tau[0], tau[1], tau[2]);
    for (int i = 0; i < 3; ++i) {
      f[F::kJacobianVel + i] = lin[i];
      f[F::kJacobianVel + 3 + i] = ang[i];
      f[F::kJacobianForce + i] = force[i] + gauss(0.2);
      f[F::kJacobianForce + 3 + i] = tau[i] + gauss(0.2);
    }
    return s;
  }

  CableErrorModel model_;
  const JointLimits& lim_;
  SessionOptions opts_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> n01_;
  std::array<double, kNumJoints> backlash_{};
  bool started_ = false;
  double last_t_ = 0.0;
  SessionResult out_;
};

}  // namespace

SessionResult simulate_session(const MotionPolicy& policy, const CableErrorModel& model,
                               const LoadProfile& load, const JointLimits& limits,
                               const SessionOptions& opts) {
  if (load.intervals().empty()) throw PreconditionError("load profile must cover the session");
  if (load.end() + 1e-9 < policy.duration()) throw PreconditionError("load profile ends before the session");
  Engine engine(model, limits, opts);
  engine.set_load(load);
  engine.run(policy, 0.0, true, "session");
  return engine.finish(policy.duration());
}

SessionResult simulate_plan(const SessionPlan& plan, const CableErrorModel& model,
                            const JointLimits& limits, const SessionOptions& opts) {
  Engine engine(model, limits, opts);
  JointVector at = plan.has_start ? plan.start : limits.center();

  // Materialize policies first so the load schedule is known up front.
  std::vector<std::unique_ptr<MotionPolicy>> policies;
  LoadProfile load;
  double t = 0.0;
  for (const auto& ph : plan.phases) {
    const double dur = ph.end_at >= 0.0 ? std::max(0.0, ph.end_at - t) : ph.duration_s;
    std::unique_ptr<MotionPolicy> p = ph.make_policy ? ph.make_policy(at, dur) : std::make_unique<HoldPolicy>(at, dur);
    if (!p) throw PreconditionError("phase '" + ph.label + "' produced no policy");
    load.append({t, t + p->duration(), ph.load_g, ph.idle});
    t += p->duration();
    at = p->end_position();
    policies.push_back(std::move(p));
  }
  if (policies.empty()) throw PreconditionError("session plan has no phases");
  engine.set_load(load);
  engine.start(policies.front()->position(0.0));

  t = 0.0;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (plan.phases[i].homing_before) engine.homing(policies[i]->position(0.0));
    engine.run(*policies[i], t, plan.phases[i].record, plan.phases[i].label);
    t += policies[i]->duration();
  }
  return engine.finish(t);
}

}  // namespace cablecal
