#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cablecal/config.hpp"
#include "cablecal/data.hpp"
#include "cablecal/eval.hpp"
#include "cablecal/models.hpp"
#include "cablecal/sim.hpp"

namespace cablecal {

inline constexpr const char* kTrainLabel = "train";
inline constexpr const char* kTestLabel = "test";

// ---------------------------------------------------------------------------
// Phase builders

Phase trajectory_phase(std::string label, Trajectory traj, const FollowerSpeeds& speeds, double load_g = 0.0,
                       bool record = true);
Phase random_phase(std::string label, const JointLimits& limits, const RandomMotionConfig& cfg, double duration_s,
                   std::uint64_t seed, double load_g = 0.0, bool record = true);
/// Unrecorded constant-speed move to `target`.
Phase goto_phase(std::string label, const JointVector& target, const FollowerSpeeds& speeds);
Phase hold_phase(std::string label, double duration_s, bool idle, bool record = false);

std::vector<Trajectory> calibration_trajectories(const ProjectConfig& cfg, Direction d,
                                                const std::vector<double>& sparsities);

/// One follower phase per trajectory (any frame), all labelled `label`.
std::vector<Phase> training_phases(const ProjectConfig& cfg, const std::vector<Trajectory>& trajectories,
                                   const std::string& label = kTrainLabel);
std::vector<Phase> training_phases(const ProjectConfig& cfg, Direction d, const std::vector<double>& sparsities,
                                   const std::string& label = kTrainLabel);

/// Session time at which the plan ends, without simulating it.
double plan_duration(const SessionPlan& plan, const JointLimits& limits);

/// Independent sub-seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Simulates a plan and packs it as a bag (meta records the seed and plan labels).
RecordedBag record_plan(const ProjectConfig& cfg, const SessionPlan& plan, std::uint64_t seed,
                        AuxMode aux = AuxMode::Catalog, const CableErrorModel* model = nullptr);

/// Training trajectories for one direction followed by a random test run
/// (labels "train" and "test").
SessionPlan calibration_plan(const ProjectConfig& cfg, const std::vector<Trajectory>& trajectories,
                             std::uint64_t seed, double test_duration_s);
SessionPlan calibration_plan(const ProjectConfig& cfg, Direction d, const std::vector<double>& sparsities,
                             std::uint64_t seed, double test_duration_s);

struct TrainTest {
  Dataset train;
  Dataset test;
};

/// Rows labelled "train" / "test"; without labels, the first 80 % / last 20 %
/// of the time axis.
Dataset training_rows(const Dataset& d);
Dataset test_rows(const Dataset& d);

TrainTest split_by_label(const RecordedBag& bag, const ProjectConfig& cfg, FeatureSet set = FeatureSet::Selected);

/// Fits one model with the training settings of `cfg` (the MLP uses the large
/// configuration when cfg.training.large_mlp is set).
std::unique_ptr<CalibrationModel> fit_model(ModelKind kind, const Dataset& train, const ProjectConfig& cfg,
                                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiments

struct FittedModel {
  std::string label;
  std::unique_ptr<CalibrationModel> model;
};

struct CalibrationRun {
  RecordedBag bag;
  Dataset train;
  Dataset test;
  FixedOffsetModel offset;
  std::vector<FittedModel> models;
  std::vector<RmseReport> reports;
};

/// Records one calibration session, fits every configured model kind and
/// evaluates each on the test run.
CalibrationRun run_calibration(const ProjectConfig& cfg, std::uint64_t seed);
CalibrationRun run_calibration(const ProjectConfig& cfg, std::uint64_t seed, Direction d,
                               const std::vector<ModelKind>& kinds);

struct SweepRow {
  Direction direction;
  std::vector<RmseReport> reports;
};

std::vector<SweepRow> direction_sweep(const ProjectConfig& cfg, std::uint64_t seed,
                                      const std::vector<Direction>& directions, const std::vector<ModelKind>& kinds);

enum class DriftCondition { Loaded, Unloaded, Idle };
std::string to_string(DriftCondition c);
DriftCondition parse_drift_condition(const std::string& s);

struct DriftCurve {
  std::string model;
  std::vector<RmseReport> hours;
};

struct DriftResult {
  DriftCondition condition = DriftCondition::Unloaded;
  double origin = 0.0;
  double seconds_per_hour = 3600.0;
  std::vector<DriftCurve> curves;  // includes "fixed-offset"
};

struct DriftSession {
  RecordedBag bag;
  double origin = 0.0;  // end of calibration, start of hour 0
  double seconds_per_hour = 3600.0;
};

/// Calibrate on `sparsities`, then once per hour: return to center, record
/// an unloaded test window (same random motion every hour), then operate
/// under `condition` until the next hour mark.
DriftSession record_drift_session(const ProjectConfig& cfg, std::uint64_t seed, DriftCondition condition,
                                  const std::vector<Trajectory>& trajectories);
DriftSession record_drift_session(const ProjectConfig& cfg, std::uint64_t seed, DriftCondition condition,
                                  const std::vector<double>& sparsities);

DriftResult drift_study(const ProjectConfig& cfg, std::uint64_t seed, DriftCondition condition,
                        const std::vector<ModelKind>& kinds);

/// Short training (first configured sparsity only), evaluated as the mean
/// over the hourly windows of an unloaded drift session, with the selected
/// and the full feature sets. Report labels: fixed-offset, linear-selected,
/// linear-full, mlp-selected, mlp-full, large-mlp-full.
std::vector<RmseReport> feature_robustness(const ProjectConfig& cfg, std::uint64_t seed, bool include_mlp_full = true);

struct HomingResult {
  ModelKind kind = ModelKind::Linear;
  /// Model trained once on all trajectories before any homing.
  std::vector<RmseReport> single;
  /// Model trained on part of the trajectories, then retrained after the
  /// first homing with the rest added.
  std::vector<RmseReport> incremental;
};

HomingResult homing_study(const ProjectConfig& cfg, std::uint64_t seed, ModelKind kind);

nlohmann::json to_json(const CalibrationRun& r);
nlohmann::json to_json(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const DriftResult& r);
nlohmann::json to_json(const HomingResult& r);

}  // namespace cablecal
