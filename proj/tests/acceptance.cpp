// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/LU>

#include "cablecal/eval.hpp"
#include "cablecal/experiments.hpp"
#include "cablecal/mlp.hpp"
#include "cablecal/models.hpp"
#include "helpers.hpp"

using namespace cablecal;

namespace {

constexpr double kCenterRelTol = 1e-9;
constexpr double kOracleTol = 1e-12;
constexpr double kRecoveryRelTol = 1e-6;
constexpr double kRecoveryRmseTol = 1e-6;
constexpr double kModeAgreementTol = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr double kAdamTol = 1e-12;
constexpr double kMlpWithin = 1.2;
constexpr double kOffsetReduction = 0.50;
constexpr double kLearnedReduction = 0.60;
constexpr double kIdleFlat = 0.15;
constexpr double kLatencyBudgetS = 1e-3;
constexpr double kMlpLatencyRatio = 20.0;
constexpr std::size_t kLatencySamples = 10000;
constexpr std::size_t kLatencyRuns = 3;
constexpr double kGeometrySeconds = 10.0;
constexpr double kRecoverySeconds = 5.0;
constexpr double kHierarchySeconds = 300.0;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string jv(const JointVector& v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(%.4g, %.4g, %.4g)", v[0], v[1], v[2]);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << o.detail << std::endl;
}

// --- 1 ---------------------------------------------------------------------

Outcome geometry() {
  const auto t0 = Clock::now();
  const auto lim = JointLimits::defaults();
  const JointVector c = lim.center(), r = lim.range();
  double worst_center = 0.0, worst_span = 0.0;
  bool inside = true;
  for (Direction d : kAllDirections) {
    const auto sw = direction_joints(d);
    const int m = static_cast<int>(sw[0]) + sw[1] + sw[2];
    for (int inv = 2; inv <= 6; ++inv) {
      const Trajectory t = make_calibration_trajectory(d, 1.0 / inv, lim);
      for (const auto& w : t.waypoints) inside = inside && lim.contains(w);
      const auto [lo, hi] = bounding_box(t);
      for (std::size_t j = 0; j < 3; ++j) {
        // single r/sqrt3, double sqrt2 r/sqrt3, triple r on swept joints; r/sqrt3 elsewhere
        const double frac = sw[j] ? std::sqrt(static_cast<double>(m) / 3.0) : 1.0 / std::sqrt(3.0);
        worst_center = std::max(worst_center, std::abs(0.5 * (lo[j] + hi[j]) - c[j]) / r[j]);
        worst_span = std::max(worst_span, std::abs((hi[j] - lo[j]) - frac * r[j]) / r[j]);
      }
    }
  }
  const double secs = since(t0);
  std::ostringstream s;
  s << "35 trajectories, inside limits=" << (inside ? "yes" : "no") << ", max center dev=" << worst_center
    << ", max span dev=" << worst_span << " (rel), " << secs << " s";
  return {inside && worst_center < kCenterRelTol && worst_span < kCenterRelTol && secs < kGeometrySeconds, s.str()};
}

// --- 2 ---------------------------------------------------------------------

Eigen::Matrix4d hT(double x, double y, double z) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 3) = x;
  m(1, 3) = y;
  m(2, 3) = z;
  return m;
}

Eigen::Matrix4d hR(int axis, double deg) {
  const double a = deg * M_PI / 180.0, c = std::cos(a), s = std::sin(a);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  const int i = (axis + 1) % 3, k = (axis + 2) % 3;
  m(i, i) = c;
  m(i, k) = -s;
  m(k, i) = s;
  m(k, k) = c;
  return m;
}

Outcome transform_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Trajectory base;
  for (int i = 0; i < 1000; ++i) base.waypoints.push_back({u(rng), u(rng), u(rng)});
  const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0);
  struct Case {
    Direction d;
    Eigen::Matrix4d h;
    Eigen::Vector3d scale;
  };
  const Case cases[] = {
      {Direction::J2, hT(0.5, 0.5, 0.5) * hR(2, 90), Eigen::Vector3d::Ones()},
      {Direction::J1J2, hT(0.5 * s2, 0.5 * s2, 0.5) * hR(2, 45), {1 / s2, 1 / s2, 1.0}},
      {Direction::J1J2J3, hT(0.5 * s3, 0.5 * s3, 0.5 * s3) * hR(1, 45) * hR(0, 45), {1 / s3, 1 / s3, 1 / s3}},
  };
  double worst = 0.0;
  std::ostringstream s;
  for (const auto& c : cases) {
    const Trajectory got = rotate_to_direction(base, c.d);
    double dev = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      const auto& p = base.waypoints[i];
      const Eigen::Vector4d q = c.h * Eigen::Vector4d(p[0], p[1], p[2], 1.0);
      for (int j = 0; j < 3; ++j) dev = std::max(dev, std::abs(got.waypoints[i][static_cast<std::size_t>(j)] - q[j] * c.scale[j]));
    }
    s << to_string(c.d) << "=" << dev << " ";
    worst = std::max(worst, dev);
  }
  s << "(max abs, 1000 waypoints)";
  return {worst < kOracleTol, s.str()};
}

// --- 3 ---------------------------------------------------------------------

CableErrorModel noiseless_linear() {
  CableErrorModel m = CableErrorModel::linear_only();
  m.torque.noise_sd = {0.0, 0.0, 0.0};
  m.torque.wrist_noise_sd = 0.0;
  return m;
}

Dataset linear_session(const CableErrorModel& m, double seconds, std::uint64_t seed) {
  const auto lim = JointLimits::defaults();
  RandomMotionConfig rc;
  rc.range_fraction = 0.9;
  const RandomSinusoidPolicy policy(lim, rc, seconds, seed, lim.center());
  SessionOptions o;
  o.seed = seed;
  o.truth_hz = o.state_hz;  // coincident stamps: pairs carry no timing error
  const auto s = simulate_session(policy, m, LoadProfile::constant(seconds, 0.0), lim, o);
  return synchronize(make_bag(s), 0.0);
}

Outcome linear_recovery() {
  const auto t0 = Clock::now();
  const CableErrorModel m = noiseless_linear();
  const Dataset train = linear_session(m, 300.0, 1);
  const Dataset test = linear_session(m, 120.0, 2);
  const LinearModel fit = fit_linear(train, OutputMode::OnError);

  // reported = q + o + A (q - c) + G tau  =>  q - reported = (M - I) r - M G tau + (I - M) c - M o,
  // M = (I + A)^-1. Inputs: 8 reported positions, then 8 torques.
  const JointVector c = JointLimits::defaults().center();
  Eigen::Matrix3d A, G;
  Eigen::Vector3d o, cv(c[0], c[1], c[2]);
  for (int j = 0; j < 3; ++j) {
    o[j] = m.joints[static_cast<std::size_t>(j)].offset;
    for (int k = 0; k < 3; ++k) {
      A(j, k) = m.joints[static_cast<std::size_t>(j)].position_gain[static_cast<std::size_t>(k)];
      G(j, k) = m.joints[static_cast<std::size_t>(j)].torque_gain[static_cast<std::size_t>(k)];
    }
  }
  const Eigen::Matrix3d M = (Eigen::Matrix3d::Identity() + A).inverse();
  const Eigen::Matrix3d Wr = M - Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d Wt = -M * G;
  const Eigen::Vector3d b = cv - M * cv - M * o;
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(fit.weights().rows(), 3);
  want.row(0) = b.transpose();
  want.block(1, 0, 3, 3) = Wr.transpose();
  want.block(1 + 8, 0, 3, 3) = Wt.transpose();

  const double rel = (fit.weights() - want).norm() / want.norm();
  const JointVector e = rmse(fit.predict(test), test.truth);
  const double worst = std::max({e[0], e[1], e[2]});
  const double secs = since(t0);
  std::ostringstream s;
  s << "coefficient rel err=" << rel << ", test rmse=" << jv(e) << ", " << secs << " s";
  return {rel < kRecoveryRelTol && worst < kRecoveryRmseTol && secs < kRecoverySeconds, s.str()};
}

// --- shared calibration data ------------------------------------------------

struct SeedData {
  TrainTest tt;
};

SeedData calibration_data(const ProjectConfig& cfg, std::uint64_t seed) {
  const auto plan = calibration_plan(cfg, cfg.trajectory.direction, cfg.trajectory.sparsities, seed,
                                     cfg.trajectory.test_duration_s);
  return {split_by_label(record_plan(cfg, plan, seed), cfg, FeatureSet::Selected)};
}

// --- 4 ---------------------------------------------------------------------

Outcome mode_identity(const ProjectConfig& cfg) {
  const auto data = calibration_data(cfg, 5);
  double worst = 0.0;
  const auto a = fit_linear(data.tt.train, OutputMode::OnError);
  const auto b = fit_linear(data.tt.train, OutputMode::EndToEnd);
  worst = std::max(worst, (a.predict(data.tt.test) - b.predict(data.tt.test)).cwiseAbs().maxCoeff());
  // Synthetic sets whose inputs contain the reported positions.
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::MatrixXd rep = 10.0 * testutil::gaussian(2000, 3, rng);
    Eigen::MatrixXd x(2000, 7);
    x << rep, testutil::gaussian(2000, 4, rng);
    const Eigen::MatrixXd truth = rep + (x.array().sin().matrix() * testutil::gaussian(7, 3, rng));
    const auto d = testutil::make_dataset(x, truth, rep);
    const auto p = fit_linear(d, OutputMode::OnError), q = fit_linear(d, OutputMode::EndToEnd);
    worst = std::max(worst, (p.predict(d) - q.predict(d)).cwiseAbs().maxCoeff());
  }
  std::ostringstream s;
  s << "max |on-error - end-to-end| = " << worst << " over simulator + 3 synthetic sets";
  return {worst < kModeAgreementTol, s.str()};
}

// --- 5 ---------------------------------------------------------------------

Outcome mlp_correctness(const ProjectConfig& cfg) {
  std::mt19937_64 rng(77);
  Mlp net(4, {5, 5}, 3, rng);
  for (auto& l : net.layers()) l.b = 0.1 * testutil::gaussian(l.b.size(), 1, rng);
  const Eigen::MatrixXd x = testutil::gaussian(4, 32, rng), y = testutil::gaussian(3, 32, rng);
  const LayerPenalty hp{0.0, 1e-3, 1e-3, 1e-2}, op{0.0, 1e-3, 0.0, 0.0};
  std::vector<Mlp::Layer> grads;
  net.loss_and_grad(x, y, hp, op, grads);
  std::vector<double> analytic;
  for (const auto& g : grads) {
    analytic.insert(analytic.end(), g.w.data(), g.w.data() + g.w.size());
    analytic.insert(analytic.end(), g.b.data(), g.b.data() + g.b.size());
  }
  const Eigen::VectorXd p0 = net.flatten();
  Mlp probe = net;
  double grad_err = 0.0;
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    const double h = 1e-6;
    Eigen::VectorXd p = p0;
    p[i] += h;
    probe.unflatten(p);
    const double up = probe.loss(x, y, hp, op);
    p[i] = p0[i] - h;
    probe.unflatten(p);
    const double fd = (up - probe.loss(x, y, hp, op)) / (2 * h);
    const double a = analytic[static_cast<std::size_t>(i)];
    grad_err = std::max(grad_err, std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-7}));
  }

  Eigen::VectorXd theta = testutil::gaussian(50, 1, rng);
  const Eigen::VectorXd g = testutil::gaussian(50, 1, rng);
  const Eigen::VectorXd want = theta.array() - 1e-3 * g.array() / (g.array().abs() + 1e-8);
  Adam adam(1e-3, 0.9, 0.999, 1e-8);
  std::vector<Eigen::Map<Eigen::VectorXd>> ps{Eigen::Map<Eigen::VectorXd>(theta.data(), 50)};
  std::vector<Eigen::Map<const Eigen::VectorXd>> gs{Eigen::Map<const Eigen::VectorXd>(g.data(), 50)};
  adam.step(ps, gs);
  const double adam_err = (theta - want).cwiseAbs().maxCoeff();

  const auto data = calibration_data(cfg, 3);
  MlpConfig mc = cfg.mlp_config();
  mc.epochs = 5;
  const auto a = fit_mlp(data.tt.train, OutputMode::OnError, mc, 9);
  const auto b = fit_mlp(data.tt.train, OutputMode::OnError, mc, 9);
  const Eigen::VectorXd wa = a.network().flatten(), wb = b.network().flatten();
  const bool identical =
      wa.size() == wb.size() && std::memcmp(wa.data(), wb.data(), sizeof(double) * static_cast<std::size_t>(wa.size())) == 0;

  std::ostringstream s;
  s << "grad rel err=" << grad_err << ", adam step err=" << adam_err
    << ", seeded weights bit-identical=" << (identical ? "yes" : "no");
  return {grad_err < kGradRelTol && adam_err < kAdamTol && identical, s.str()};
}

// --- 6 ---------------------------------------------------------------------

Outcome train_on_error(const ProjectConfig& cfg) {
  bool ok = true;
  std::ostringstream s;
  s << "epochs=" << cfg.training.mlp.epochs << ";";
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = calibration_data(cfg, seed);
    ProjectConfig on_cfg = cfg, e2e_cfg = cfg;
    on_cfg.training.mode = OutputMode::OnError;
    e2e_cfg.training.mode = OutputMode::EndToEnd;
    const auto on = fit_model(ModelKind::Mlp, data.tt.train, on_cfg, seed);
    const auto e2e = fit_model(ModelKind::Mlp, data.tt.train, e2e_cfg, seed);
    const JointVector a = rmse(on->predict(data.tt.test), data.tt.test.truth);
    const JointVector b = rmse(e2e->predict(data.tt.test), data.tt.test.truth);
    for (std::size_t j = 0; j < 3; ++j) ok = ok && a[j] < b[j];
    s << " seed " << seed << ": on-error " << jv(a) << " vs e2e " << jv(b) << ";";
  }
  return {ok, s.str()};
}

// --- 7 and 10 share one calibration run -------------------------------------

struct Hierarchy {
  CalibrationRun run;
  double seconds = 0.0;
};

Outcome hierarchy(const Hierarchy& h) {
  const auto& reps = h.run.reports;
  const RmseReport *lin = nullptr, *mlp = nullptr;
  for (const auto& r : reps) {
    if (r.label == "linear") lin = &r;
    if (r.label == "mlp") mlp = &r;
  }
  if (!lin || !mlp) return {false, "missing linear or mlp report"};
  bool ok = h.seconds < kHierarchySeconds;
  for (std::size_t j = 0; j < 3; ++j) {
    const double raw = lin->raw[j], fo = lin->fixed_offset[j], l = lin->model[j], m = mlp->model[j];
    ok = ok && raw > fo && fo > l && m <= kMlpWithin * l;
    ok = ok && (raw - fo) / raw >= kOffsetReduction;
    ok = ok && (fo - l) / fo >= kLearnedReduction && (fo - m) / fo >= kLearnedReduction;
  }
  std::ostringstream s;
  s << "raw " << jv(lin->raw) << " > fo " << jv(lin->fixed_offset) << " > linear " << jv(lin->model) << ", mlp "
    << jv(mlp->model) << ", " << h.seconds << " s";
  return {ok, s.str()};
}

Outcome latency(const Hierarchy& h) {
  std::map<std::string, LatencyReport> lat;
  for (const auto& fm : h.run.models)
    lat[fm.label] = bench_latency(*fm.model, h.run.test, kLatencySamples, kLatencyRuns, 1.0 / kLatencyBudgetS, fm.label);
  if (!lat.count("fixed-offset") || !lat.count("linear") || !lat.count("mlp")) return {false, "missing model"};
  auto runs_pass = [](const LatencyReport& r) {
    bool ok = r.run_p99.size() == kLatencyRuns && r.samples >= kLatencySamples;
    for (double p : r.run_p99) ok = ok && p < kLatencyBudgetS;
    return ok;
  };
  const double ratio = lat["mlp"].p50 / lat["linear"].p50;
  const bool ok = runs_pass(lat["fixed-offset"]) && runs_pass(lat["linear"]) && ratio >= kMlpLatencyRatio;
  std::ostringstream s;
  s << "p99 us: offset " << lat["fixed-offset"].p99 * 1e6 << ", linear " << lat["linear"].p99 * 1e6 << ", mlp "
    << lat["mlp"].p99 * 1e6 << "; median mlp/linear = " << ratio << "x; " << kLatencySamples << " samples x "
    << kLatencyRuns << " runs";
  return {ok, s.str()};
}

// --- 8 ---------------------------------------------------------------------

Outcome drift(const ProjectConfig& cfg) {
  const std::vector<ModelKind> kinds{ModelKind::Linear, ModelKind::Mlp};
  const DriftResult idle = drift_study(cfg, 1, DriftCondition::Idle, kinds);
  const DriftResult loaded = drift_study(cfg, 1, DriftCondition::Loaded, kinds);
  bool ok = true;
  double worst_idle = 0.0;
  std::ostringstream s;
  for (const auto& c : idle.curves) {
    const auto& h0 = c.hours.front();
    for (const auto& h : c.hours) {
      if (!h.present) return {false, "idle hour without samples"};
      for (std::size_t j = 0; j < 3; ++j) worst_idle = std::max(worst_idle, std::abs(h.model[j] - h0.model[j]) / h0.model[j]);
    }
  }
  ok = ok && worst_idle <= kIdleFlat;
  s << "idle max rel change=" << worst_idle << ";";
  for (const auto& c : loaded.curves) {
    const auto& h0 = c.hours.front();
    const auto& h5 = c.hours.at(5);
    if (!h0.present || !h5.present) return {false, "loaded hour without samples"};
    for (std::size_t j = 0; j < 3; ++j) ok = ok && h5.model[j] > h0.model[j];
    s << " " << c.model << " h0 " << jv(h0.model) << " -> h5 " << jv(h5.model) << ";";
    if (c.model == "fixed-offset") {
      ok = ok && h5.model[0] > h0.model[0];
      s << " fo j1 drop " << h5.model[0] - h0.model[0] << ";";
    }
  }
  return {ok, s.str()};
}

// --- 9 ---------------------------------------------------------------------

Outcome robustness(const ProjectConfig& cfg) {
  const auto reports = feature_robustness(cfg, 1, false);
  std::map<std::string, const RmseReport*> by;
  for (const auto& r : reports) by[r.label] = &r;
  for (const char* k : {"linear-selected", "linear-full", "mlp-selected", "large-mlp-full"})
    if (!by.count(k)) return {false, std::string("missing ") + k};
  const auto& ls = *by["linear-selected"];
  const auto& lf = *by["linear-full"];
  const auto& ms = *by["mlp-selected"];
  const auto& big = *by["large-mlp-full"];
  bool ok = true;
  for (std::size_t j = 0; j < 3; ++j) {
    ok = ok && lf.model[j] > lf.fixed_offset[j];
    ok = ok && ls.model[j] < ls.fixed_offset[j];
    const double lo = std::min(ms.model[j], lf.model[j]), hi = std::max(ms.model[j], lf.model[j]);
    ok = ok && big.model[j] > lo && big.model[j] < hi;
  }
  std::ostringstream s;
  s << "% of fixed offset: linear-selected " << jv(ls.percentage) << ", linear-full " << jv(lf.percentage)
    << ", mlp-selected " << jv(ms.percentage) << ", large-mlp-full " << jv(big.percentage);
  return {ok, s.str()};
}

// --- 11 --------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome plumbing(const ProjectConfig& cfg) {
  SessionPlan plan;
  plan.phases.push_back(random_phase("train", cfg.limits, cfg.trajectory.random, 120.0, 4));
  const RecordedBag bag = record_plan(cfg, plan, 4);
  const Dataset d = synchronize(bag, 0.010);
  const bool counts = d.rows() == bag.state_count() && bag.truth_count() > bag.state_count();

  const auto dir = testutil::scratch("acceptance_plumbing");
  write_dataset(d, dir / "a.csv");
  const Dataset back = read_dataset(dir / "a.csv");
  write_dataset(back, dir / "b.csv");
  const bool ds_same = slurp(dir / "a.csv") == slurp(dir / "b.csv") &&
                       slurp(dir / "a.csv.json") == slurp(dir / "b.csv.json") && back.inputs == d.inputs &&
                       back.truth == d.truth && back.reported == d.reported && back.time == d.time;

  bool models_same = true;
  MlpConfig mc = cfg.mlp_config();
  mc.epochs = 2;
  std::vector<std::unique_ptr<CalibrationModel>> ms;
  ms.push_back(std::make_unique<FixedOffsetModel>(fit_offset(d)));
  ms.push_back(std::make_unique<LinearModel>(fit_linear(d, OutputMode::OnError)));
  ms.push_back(std::make_unique<PolyModel>(fit_poly2(d, OutputMode::OnError, 1e-3)));
  ms.push_back(std::make_unique<MlpModel>(fit_mlp(d, OutputMode::OnError, mc, 1)));
  for (const auto& m : ms) {
    for (ModelFormat f : {ModelFormat::Json, ModelFormat::Cbor}) {
      const auto path = dir / ("m_" + to_string(m->kind()) + "." + to_string(f));
      save_model(*m, path, f, "0123456789abcdef");
      const auto loaded = load_model(path);
      const auto path2 = dir / ("m2_" + to_string(m->kind()) + "." + to_string(f));
      save_model(*loaded, path2, f, "0123456789abcdef");
      models_same = models_same && slurp(path) == slurp(path2) && loaded->predict(d) == m->predict(d);
    }
  }
  std::ostringstream s;
  s << "pairs " << d.rows() << " / states " << bag.state_count() << " / truth " << bag.truth_count()
    << "; dataset round-trip " << (ds_same ? "identical" : "differs") << "; model files (4 kinds x json/cbor) "
    << (models_same ? "identical" : "differ");
  return {counts && ds_same && models_same, s.str()};
}

// --- 12 --------------------------------------------------------------------

Outcome homing(const ProjectConfig& cfg) {
  bool ok = true;
  std::ostringstream s;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const HomingResult r = homing_study(cfg, seed, ModelKind::Linear);
    const double single = r.single.back().model[1] - r.single.front().model[1];
    const double incr = r.incremental.back().model[1] - r.incremental.front().model[1];
    ok = ok && r.single.size() == 6 && r.incremental.size() == 6 && single > 0.0 && incr < single;
    s << " seed " << seed << ": j2 single " << r.single.front().model[1] << " -> " << r.single.back().model[1]
      << ", incremental " << r.incremental.front().model[1] << " -> " << r.incremental.back().model[1] << ";";
  }
  return {ok, s.str()};
}

}  // namespace

int main() {
  const ProjectConfig cfg;
  std::cout << "acceptance (config " << config_hash(cfg).substr(0, 16) << ")" << std::endl;

  report(1, "trajectory geometry", geometry);
  report(2, "transform oracle", transform_oracle);
  report(3, "linear-model recovery", linear_recovery);
  report(4, "on-error equals end-to-end for linear", [&] { return mode_identity(cfg); });
  report(5, "mlp correctness", [&] { return mlp_correctness(cfg); });
  report(6, "train-on-error advantage", [&] { return train_on_error(cfg); });

  Hierarchy h;
  bool have_run = false;
  report(7, "calibration hierarchy", [&] {
    const auto t0 = Clock::now();
    h.run = run_calibration(cfg, 1);
    h.seconds = since(t0);
    have_run = true;
    return hierarchy(h);
  });
  report(8, "drift reproduction", [&] { return drift(cfg); });
  report(9, "feature robustness", [&] { return robustness(cfg); });
  report(10, "latency budget", [&]() -> Outcome {
    if (!have_run) return {false, "calibration run unavailable"};
    return latency(h);
  });
  report(11, "data plumbing", [&] { return plumbing(cfg); });
  report(12, "homing study", [&] { return homing(cfg); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
