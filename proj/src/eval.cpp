#include "cablecal/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace cablecal {

JointVector rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw InvalidArgument("rmse: prediction and truth shapes differ");
  if (pred.cols() != 3) throw InvalidArgument("rmse: expected 3 columns");
  if (pred.rows() == 0) throw EmptyDatasetError("rmse of an empty set");
  const Eigen::RowVectorXd r = ((pred - truth).array().square().colwise().mean()).sqrt();
  return {r[0], r[1], r[2]};
}

RmseReport evaluate(const CalibrationModel& model, const FixedOffsetModel& offset, const Dataset& test,
                    const std::string& label) {
  RmseReport r;
  r.label = label.empty() ? to_string(model.kind()) : label;
  r.samples = test.rows();
  if (test.rows() == 0) {
    r.present = false;
    return r;
  }
  r.raw = rmse(test.reported, test.truth);
  r.fixed_offset = rmse(offset.predict(test), test.truth);
  r.model = rmse(model.predict(test), test.truth);
  for (std::size_t j = 0; j < kNumJoints; ++j)
    r.percentage[j] = r.fixed_offset[j] > 0.0 ? 100.0 * r.model[j] / r.fixed_offset[j] : 0.0;
  return r;
}

nlohmann::json to_json(const RmseReport& r) {
  nlohmann::json j{{"label", r.label}, {"samples", r.samples}, {"present", r.present}};
  if (r.hour >= 0) j["hour"] = r.hour;
  if (r.present) {
    j["raw"] = r.raw;
    j["fixed_offset"] = r.fixed_offset;
    j["model"] = r.model;
    j["percentage"] = r.percentage;
  }
  return j;
}

std::vector<RmseReport> decay_curve(const CalibrationModel& model, const FixedOffsetModel& offset,
                                    const Dataset& session, const DecayOptions& opts) {
  if (opts.hours < 1) throw InvalidArgument("decay curve needs at least one hour");
  if (!(opts.seconds_per_hour > 0.0)) throw InvalidArgument("seconds_per_hour must be > 0");
  std::vector<RmseReport> out;
  for (int h = 0; h < opts.hours; ++h) {
    const double b = opts.origin + h * opts.seconds_per_hour;
    const Dataset bucket = session.time_window(b, b + opts.seconds_per_hour);
    RmseReport r = evaluate(model, offset, bucket);
    r.hour = h;
    out.push_back(std::move(r));
  }
  return out;
}

RmseReport mean_report(const std::vector<RmseReport>& reports, const std::string& label) {
  RmseReport r;
  r.label = label;
  int n = 0;
  for (const auto& h : reports) {
    if (!h.present) continue;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      r.raw[j] += h.raw[j];
      r.fixed_offset[j] += h.fixed_offset[j];
      r.model[j] += h.model[j];
    }
    r.samples += h.samples;
    ++n;
  }
  if (n == 0) {
    r.present = false;
    return r;
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    r.raw[j] /= n;
    r.fixed_offset[j] /= n;
    r.model[j] /= n;
    r.percentage[j] = r.fixed_offset[j] > 0.0 ? 100.0 * r.model[j] / r.fixed_offset[j] : 0.0;
  }
  return r;
}

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

}  // namespace

LatencyReport bench_latency(const CalibrationModel& model, const Dataset& inputs, std::size_t n_samples,
                            std::size_t runs, double budget_hz, const std::string& label) {
  if (n_samples == 0 || runs == 0) throw InvalidArgument("latency bench needs samples and runs");
  if (!(budget_hz > 0.0)) throw InvalidArgument("budget_hz must be > 0");
  model.check_compatible(inputs);
  if (inputs.rows() == 0) throw EmptyDatasetError("latency bench needs input rows");

  using Clock = std::chrono::steady_clock;
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = inputs.inputs;
  const auto rows = static_cast<std::size_t>(x.rows());
  auto reported = [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i % rows);
    return JointVector{inputs.reported(r, 0), inputs.reported(r, 1), inputs.reported(r, 2)};
  };

  volatile double sink = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(1000, n_samples); ++i)
    sink = sink + model.predict(x.row(static_cast<Eigen::Index>(i % rows)).data(), reported(i))[0];

  LatencyReport rep;
  rep.label = label.empty() ? to_string(model.kind()) : label;
  rep.samples = n_samples;
  rep.runs = runs;
  rep.budget_hz = budget_hz;
  std::vector<double> p50s, p95s, totals;
  std::vector<double> t(n_samples);
  for (std::size_t run = 0; run < runs; ++run) {
    double total = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double* f = x.row(static_cast<Eigen::Index>(i % rows)).data();
      const JointVector rp = reported(i);
      const auto t0 = Clock::now();
      const JointVector q = model.predict(f, rp);
      const auto t1 = Clock::now();
      sink = sink + q[0];
      t[i] = std::chrono::duration<double>(t1 - t0).count();
      total += t[i];
    }
    p50s.push_back(percentile(t, 0.50));
    p95s.push_back(percentile(t, 0.95));
    rep.run_p99.push_back(percentile(t, 0.99));
    totals.push_back(total);
  }
  rep.p50 = median(p50s);
  rep.p95 = median(p95s);
  rep.p99 = median(rep.run_p99);
  rep.throughput_hz = static_cast<double>(n_samples) / median(totals);
  rep.pass = rep.p99 < 1.0 / budget_hz;
  const auto [mn, mx] = std::minmax_element(rep.run_p99.begin(), rep.run_p99.end());
  rep.p99_spread = *mn > 0.0 ? (*mx - *mn) / *mn : 0.0;
  return rep;
}

nlohmann::json to_json(const LatencyReport& r) {
  return {{"label", r.label},     {"samples", r.samples},         {"runs", r.runs},
          {"p50_s", r.p50},       {"p95_s", r.p95},               {"p99_s", r.p99},
          {"run_p99_s", r.run_p99}, {"throughput_hz", r.throughput_hz}, {"budget_hz", r.budget_hz},
          {"pass", r.pass},       {"p99_spread", r.p99_spread}};
}

void write_reports_csv(const std::vector<RmseReport>& reports, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "label,hour,joint,samples,raw,fixed_offset,model,percentage\n";
  for (const auto& r : reports) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      out << r.label << ',' << r.hour << ",j" << j + 1 << ',' << r.samples << ',';
      if (r.present)
        out << format_double(r.raw[j]) << ',' << format_double(r.fixed_offset[j]) << ',' << format_double(r.model[j])
            << ',' << format_double(r.percentage[j]);
      else
        out << ",,,";
      out << '\n';
    }
  }
}

}  // namespace cablecal
