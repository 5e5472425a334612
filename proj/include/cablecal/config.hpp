#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cablecal/core.hpp"
#include "cablecal/models.hpp"
#include "cablecal/sim.hpp"
#include "cablecal/trajectory.hpp"

namespace cablecal {

/// Bad or unreadable configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct TrajectoryConfig {
  Direction direction = Direction::J2J3;
  std::vector<double> sparsities{1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0};
  double step = kDefaultStep;
  FollowerSpeeds speeds;
  double state_hz = 30.0;
  double truth_hz = 100.0;
  double physics_hz = 1000.0;
  double sync_tolerance = 0.010;
  /// Simulated hours per session hour of drift (see SessionOptions).
  double time_scale = 1.0;
  double test_duration_s = 1200.0;
  RandomMotionConfig random;
};

struct TrainingConfig {
  std::vector<ModelKind> models{ModelKind::Offset, ModelKind::Linear, ModelKind::Mlp};
  OutputMode mode = OutputMode::OnError;
  FeatureSet features = FeatureSet::Selected;
  double ridge = 0.0;
  bool allow_large_poly = false;
  bool large_mlp = false;
  MlpConfig mlp;
  ModelFormat format = ModelFormat::Json;
};

struct EvalConfig {
  double budget_hz = 1000.0;
  std::size_t latency_samples = 10000;
  std::size_t latency_runs = 3;
  int hours = 6;
  /// Length of each hourly test recording in the drift study.
  double window_s = 180.0;
  double load_g = 500.0;
  int homings = 5;
};

struct ProjectConfig {
  JointLimits limits = JointLimits::defaults();
  CableErrorModel error_model = CableErrorModel::defaults();
  TrajectoryConfig trajectory;
  TrainingConfig training;
  EvalConfig eval;
  std::uint64_t seed = 1;
  std::size_t repeats = 1;

  SessionOptions session_options(std::uint64_t session_seed) const;
  MlpConfig mlp_config() const;

  void validate() const;
};

/// Reads TOML (or JSON for a .json file). Unknown keys are errors.
ProjectConfig load_config(const std::filesystem::path& path);
ProjectConfig parse_config_toml(const std::string& text, const std::string& source = "<string>");
ProjectConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ProjectConfig& c);
/// SHA-256 of the canonical JSON form.
std::string config_hash(const ProjectConfig& c);

}  // namespace cablecal
