#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cablecal/core.hpp"
#include "cablecal/trajectory.hpp"

namespace cablecal {

// ---------------------------------------------------------------------------
// Cable transmission error model
// ---------------------------------------------------------------------------

/// Error terms for one positioning joint. Reported position is
///
///   truth + offset + drift(t) + sum_k position_gain[k] * (q_k - c_k)
///         + sum_k torque_gain[k] * tau_k + curvature * u^2 + backlash + noise
///
/// where c is the limit center and u = (q_j - c_j) / (r_j / 2).
/// position_gain[j] / torque_gain[j] are the joint's own gains, the other
/// entries are cross terms.
struct JointErrorParams {
  double offset = 0.0;
  std::array<double, kNumJoints> position_gain{};
  std::array<double, kNumJoints> torque_gain{};
  double curvature = 0.0;
  double hysteresis_width = 0.0;  // backlash half-width
  double drift_rate_idle = 0.0;       // per hour
  double drift_rate_unloaded = 0.0;   // per operating hour, 0 g
  double drift_rate_loaded = 0.0;     // per operating hour at the reference load
  double noise_sd = 0.0;
  double homing_offset_sd = 0.0;      // random part of the re-registration
  double homing_offset_shift = 0.0;   // systematic part per homing

  friend bool operator==(const JointErrorParams&, const JointErrorParams&) = default;
};

/// Motor torque proxy: gravity (scaled by payload) plus friction.
///   tau_j = gravity_j * (1 + load_factor_j * m/m_ref) * f_j(q)
///           + coulomb_j * tanh(v_j / coulomb_velocity_j) + viscous_j * v_j + noise
/// with f_1 = (0.6 + 0.8 e) cos q1, f_2 = (0.6 + 0.8 e) sin q2, f_3 = cos q2 and
/// e the normalized insertion of joint 3.
struct TorqueModel {
  std::array<double, kNumJoints> gravity{1.0, 1.2, 0.8};
  std::array<double, kNumJoints> load_factor{0.6, 0.5, 0.4};
  std::array<double, kNumJoints> coulomb{0.30, 0.30, 0.25};
  std::array<double, kNumJoints> coulomb_velocity{0.5, 0.5, 1.5};
  std::array<double, kNumJoints> viscous{0.01, 0.01, 0.003};
  std::array<double, kNumJoints> noise_sd{0.005, 0.005, 0.005};
  std::array<double, 5> wrist_torque{0.05, 0.03, 0.02, 0.02, 0.01};
  double wrist_noise_sd = 0.002;

  friend bool operator==(const TorqueModel&, const TorqueModel&) = default;
};

struct CableErrorModel {
  std::array<JointErrorParams, kNumJoints> joints{};
  TorqueModel torque{};
  double reference_load_g = 500.0;
  std::uint64_t rng_seed = 1;
  /// Homings applied so far and the accumulated offset re-registration.
  int homing_count = 0;
  std::array<double, kNumJoints> registration{};

  /// Versioned default gains; see config/default.toml.
  static CableErrorModel defaults();
  /// All terms zero: reported == truth.
  static CableErrorModel identity();
  /// Only the affine part of defaults() (offsets, position and torque gains).
  static CableErrorModel linear_only();

  friend bool operator==(const CableErrorModel&, const CableErrorModel&) = default;
};

nlohmann::json to_json(const CableErrorModel& m);
CableErrorModel error_model_from_json(const nlohmann::json& j);

/// Re-registers the encoders: every offset moves by shift + N(0, sd). The draw
/// is seeded from (rng_seed, homing index) so the sequence is reproducible.
CableErrorModel apply_homing(const CableErrorModel& m);

// ---------------------------------------------------------------------------
// Load schedule
// ---------------------------------------------------------------------------

struct LoadInterval {
  double begin = 0.0;  // s
  double end = 0.0;    // s
  double mass_g = 0.0;
  bool idle = false;
};

class LoadProfile {
 public:
  LoadProfile() = default;
  explicit LoadProfile(std::vector<LoadInterval> intervals);

  static LoadProfile constant(double duration_s, double mass_g, bool idle = false);

  const std::vector<LoadInterval>& intervals() const { return intervals_; }
  double end() const { return intervals_.empty() ? 0.0 : intervals_.back().end; }

  const LoadInterval& at(double t) const;

  /// Accumulated drift of one joint at session time t, in joint units.
  /// Elapsed time is multiplied by time_scale before the hourly rates apply.
  double drift(double t, const JointErrorParams& p, double reference_load_g,
               double time_scale = 1.0) const;

  void append(const LoadInterval& iv);

 private:
  std::vector<LoadInterval> intervals_;
};

double drift_rate(const LoadInterval& iv, const JointErrorParams& p, double reference_load_g);

// ---------------------------------------------------------------------------
// Motion policies (ground-truth joint motion)
// ---------------------------------------------------------------------------

class MotionPolicy {
 public:
  virtual ~MotionPolicy() = default;
  virtual double duration() const = 0;
  virtual JointVector position(double t) const = 0;
  virtual JointVector velocity(double t) const = 0;
  JointVector end_position() const { return position(duration()); }
};

/// Piecewise-linear constant-speed follower. A go-to move from `start` to
/// the first waypoint is prepended.
class TrajectoryFollower final : public MotionPolicy {
 public:
  TrajectoryFollower(const Trajectory& traj, const FollowerSpeeds& speeds, const JointVector& start);
  TrajectoryFollower(const Trajectory& traj, const FollowerSpeeds& speeds);

  double duration() const override { return times_.back(); }
  JointVector position(double t) const override;
  JointVector velocity(double t) const override;

 private:
  std::size_t segment(double t) const;
  std::vector<JointVector> points_;
  std::vector<double> times_;
};

struct RandomMotionConfig {
  /// Fraction of each joint range, centered on the limit center, that targets
  /// are drawn from.
  double range_fraction = 0.57735026918962573;  // 1/sqrt(3), the common calibrated volume
  JointVector min_speed{2.0, 2.0, 5.0};
  JointVector max_speed{8.0, 8.0, 20.0};
  double min_segment_s = 0.25;

  friend bool operator==(const RandomMotionConfig&, const RandomMotionConfig&) = default;
};

/// Each joint independently moves toward successive random targets with a
/// random peak speed along a half-cosine velocity profile.
class RandomSinusoidPolicy final : public MotionPolicy {
 public:
  RandomSinusoidPolicy(const JointLimits& limits, const RandomMotionConfig& cfg, double duration_s,
                       std::uint64_t seed, const JointVector& start);

  double duration() const override { return duration_; }
  JointVector position(double t) const override;
  JointVector velocity(double t) const override;

  double max_speed(std::size_t joint) const { return max_speed_[joint]; }

 private:
  struct Segment {
    double t0, t1, from, to;
  };
  const Segment& find(std::size_t j, double t) const;
  double duration_;
  std::array<std::vector<Segment>, kNumJoints> segs_;
  std::array<double, kNumJoints> max_speed_{};
};

class HoldPolicy final : public MotionPolicy {
 public:
  HoldPolicy(const JointVector& at, double duration_s) : at_(at), duration_(duration_s) {}
  double duration() const override { return duration_; }
  JointVector position(double) const override { return at_; }
  JointVector velocity(double) const override { return {}; }

 private:
  JointVector at_;
  double duration_;
};

// ---------------------------------------------------------------------------
// Emitted state and feature catalog
// ---------------------------------------------------------------------------

/// Column offsets of the 138-wide state vector. Each arm block has 8 entries:
/// joints 1-7 and the grasper.
namespace feature {
inline constexpr std::size_t kArm = 8;
inline constexpr std::size_t kJointPos = 0;
inline constexpr std::size_t kMotorTorque = 8;
inline constexpr std::size_t kTimestamp = 16;
inline constexpr std::size_t kRunLevel = 17;
inline constexpr std::size_t kSublevel = 18;
inline constexpr std::size_t kLastSeq = 19;
inline constexpr std::size_t kArmType = 20;
inline constexpr std::size_t kGraspDesired = 21;
inline constexpr std::size_t kEncoderValue = 22;
inline constexpr std::size_t kEncoderOffset = 30;
inline constexpr std::size_t kMotorPos = 38;
inline constexpr std::size_t kMotorVel = 46;
inline constexpr std::size_t kJointVel = 54;
inline constexpr std::size_t kJointPosDesired = 62;
inline constexpr std::size_t kMotorPosDesired = 70;
inline constexpr std::size_t kMotorCurrent = 78;
inline constexpr std::size_t kDac = 86;
inline constexpr std::size_t kJointPosError = 94;
inline constexpr std::size_t kEePose = 102;         // xyz + 3x3 rotation
inline constexpr std::size_t kEePoseDesired = 114;  // xyz + 3x3 rotation
inline constexpr std::size_t kJacobianVel = 126;
inline constexpr std::size_t kJacobianForce = 132;
inline constexpr std::size_t kDimFull = 138;
inline constexpr std::size_t kDimSelected = 16;
}  // namespace feature

/// 138 names; the first 16 (8 joint positions, 8 motor torques) are selected.
const FeatureSchema& default_feature_schema();

/// How the auxiliary (non-selected) block is filled.
///  Catalog: robot-state quantities derived from the motion.
///  Noise:   independent N(0,1) draws.
enum class AuxMode { Catalog, Noise };

struct RobotState {
  double timestamp = 0.0;
  JointVector reported;
  std::array<double, kNumJoints> motor_torques{};
  std::vector<double> features;  // dim_full
};

struct TruthSample {
  double timestamp = 0.0;
  JointVector position;
};

struct SessionOptions {
  double state_hz = 30.0;
  double truth_hz = 100.0;
  /// Backlash state is integrated at this rate between emitted samples.
  double physics_hz = 1000.0;
  double time_scale = 1.0;
  std::uint64_t seed = 1;
  AuxMode aux_mode = AuxMode::Catalog;
  std::array<double, 5> wrist_positions{10.0, 0.0, 15.0, 15.0, 30.0};
};

/// Builds a phase's motion from where the previous phase ended. duration_s
/// is the phase's scheduled length (policies with their own length ignore it).
using PolicyFactory = std::function<std::unique_ptr<MotionPolicy>(const JointVector& start, double duration_s)>;

/// One contiguous block of a session.
struct Phase {
  std::string label;
  PolicyFactory make_policy;  // null: hold still
  double duration_s = 0.0;
  double end_at = -1.0;       // if >= 0: the phase lasts until this session time
  double load_g = 0.0;
  bool idle = false;
  bool record = true;
  bool homing_before = false;
};

struct SessionPlan {
  std::vector<Phase> phases;
  JointVector start;  // initial pose; defaults to the limit center when unset
  bool has_start = false;
};

struct RecordedSpan {
  std::string label;
  double begin = 0.0;
  double end = 0.0;
  int homing_count = 0;
  double load_g = 0.0;
  bool idle = false;
};

struct SessionResult {
  std::vector<RobotState> states;
  std::vector<TruthSample> truth;
  std::vector<RecordedSpan> spans;
  CableErrorModel final_model;
  LoadProfile load;
  double duration = 0.0;
};

/// Simulates one policy under a load schedule covering [0, policy.duration()].
SessionResult simulate_session(const MotionPolicy& policy, const CableErrorModel& model,
                               const LoadProfile& load, const JointLimits& limits,
                               const SessionOptions& opts);

/// Chains phases on one session clock. Homing events, load, idleness, and
/// recording windows come from the phases.
SessionResult simulate_plan(const SessionPlan& plan, const CableErrorModel& model,
                            const JointLimits& limits, const SessionOptions& opts);

/// Reported-position error (reported - truth) without noise or backlash, for
/// oracles that need the deterministic part of the model.
JointVector deterministic_error(const CableErrorModel& m, const JointLimits& lim, const JointVector& q,
                                const std::array<double, kNumJoints>& tau);

/// Torque proxy without noise.
std::array<double, kNumJoints> torque_proxy(const TorqueModel& tm, const JointLimits& lim,
                                            const JointVector& q, const JointVector& v, double load_g,
                                            double reference_load_g);

/// Derives an independent engine for a named stream from a base seed.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace cablecal
