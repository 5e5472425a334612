#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "cablecal/core.hpp"
#include "cablecal/data.hpp"
#include "cablecal/models.hpp"

namespace cablecal {

/// Per-column root mean squared difference.
JointVector rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// Accuracy of one model on one test set, with the raw and fixed-offset
/// baselines. percentage = 100 * model / fixed_offset per joint.
struct RmseReport {
  std::string label;
  JointVector raw;
  JointVector fixed_offset;
  JointVector model;
  JointVector percentage;
  std::size_t samples = 0;
  int hour = -1;  // -1: not bucketed
  bool present = true;
};

RmseReport evaluate(const CalibrationModel& model, const FixedOffsetModel& offset, const Dataset& test,
                    const std::string& label = {});

nlohmann::json to_json(const RmseReport& r);

/// Per-joint mean of the present reports (hours of a decay curve, seeds of
/// repeated runs). percentage is recomputed from the means.
RmseReport mean_report(const std::vector<RmseReport>& reports, const std::string& label);

struct DecayOptions {
  double origin = 0.0;              // session time of hour 0
  int hours = 6;
  double seconds_per_hour = 3600.0;  // session seconds per drift hour (3600 / time_scale)
};

/// One report per left-closed hour bucket [h, h + 1). Empty buckets come back
/// with present = false.
std::vector<RmseReport> decay_curve(const CalibrationModel& model, const FixedOffsetModel& offset,
                                    const Dataset& session, const DecayOptions& opts = {});

struct LatencyReport {
  std::string label;
  std::size_t samples = 0;
  std::size_t runs = 0;
  // Median over runs of the per-run percentiles, seconds per call.
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  std::vector<double> run_p99;
  double throughput_hz = 0.0;
  double budget_hz = 1000.0;
  bool pass = false;
  /// (max - min) / min of run_p99.
  double p99_spread = 0.0;
};

/// Times predict() one sample at a time with a monotonic clock.
LatencyReport bench_latency(const CalibrationModel& model, const Dataset& inputs, std::size_t n_samples = 10000,
                            std::size_t runs = 3, double budget_hz = 1000.0, const std::string& label = {});

nlohmann::json to_json(const LatencyReport& r);

/// Writes a list of reports as long-format CSV (one row per joint).
void write_reports_csv(const std::vector<RmseReport>& reports, const std::filesystem::path& path);

}  // namespace cablecal
