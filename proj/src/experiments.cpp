#include "cablecal/experiments.hpp"

#include <algorithm>
#include <cmath>

namespace cablecal {

namespace {

// Sub-seed streams.
constexpr std::uint64_t kTestMotion = 0x74657374;
constexpr std::uint64_t kOperation = 0x6f706572;
constexpr std::uint64_t kModelInit = 0x6d6f646c;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string short_label(ModelKind k) {
  switch (k) {
    case ModelKind::Offset: return "fixed-offset";
    default: return to_string(k);
  }
}

}  // namespace

Phase trajectory_phase(std::string label, Trajectory traj, const FollowerSpeeds& speeds, double load_g, bool record) {
  Phase p;
  p.label = std::move(label);
  p.load_g = load_g;
  p.record = record;
  p.make_policy = [traj = std::move(traj), speeds](const JointVector& start, double) {
    return std::make_unique<TrajectoryFollower>(traj, speeds, start);
  };
  return p;
}

Phase random_phase(std::string label, const JointLimits& limits, const RandomMotionConfig& cfg, double duration_s,
                   std::uint64_t seed, double load_g, bool record) {
  Phase p;
  p.label = std::move(label);
  p.duration_s = duration_s;
  p.load_g = load_g;
  p.record = record;
  p.make_policy = [limits, cfg, seed](const JointVector& start, double dur) {
    return std::make_unique<RandomSinusoidPolicy>(limits, cfg, dur, seed, start);
  };
  return p;
}

Phase goto_phase(std::string label, const JointVector& target, const FollowerSpeeds& speeds) {
  Trajectory t;
  t.waypoints = {target};
  t.frame = Frame::Joint;
  return trajectory_phase(std::move(label), std::move(t), speeds, 0.0, false);
}

Phase hold_phase(std::string label, double duration_s, bool idle, bool record) {
  Phase p;
  p.label = std::move(label);
  p.duration_s = duration_s;
  p.idle = idle;
  p.record = record;
  return p;
}

std::vector<Trajectory> calibration_trajectories(const ProjectConfig& cfg, Direction d,
                                                const std::vector<double>& sparsities) {
  std::vector<Trajectory> out;
  for (double s : sparsities) out.push_back(make_calibration_trajectory(d, s, cfg.limits, cfg.trajectory.step));
  return out;
}

std::vector<Phase> training_phases(const ProjectConfig& cfg, const std::vector<Trajectory>& trajectories,
                                   const std::string& label) {
  std::vector<Phase> out;
  for (const auto& t : trajectories)
    out.push_back(trajectory_phase(label, to_joint_frame(t, cfg.limits), cfg.trajectory.speeds));
  return out;
}

std::vector<Phase> training_phases(const ProjectConfig& cfg, Direction d, const std::vector<double>& sparsities,
                                   const std::string& label) {
  return training_phases(cfg, calibration_trajectories(cfg, d, sparsities), label);
}

double plan_duration(const SessionPlan& plan, const JointLimits& limits) {
  JointVector at = plan.has_start ? plan.start : limits.center();
  double t = 0.0;
  for (const auto& ph : plan.phases) {
    const double dur = ph.end_at >= 0.0 ? std::max(0.0, ph.end_at - t) : ph.duration_s;
    if (!ph.make_policy) {
      t += dur;
      continue;
    }
    const auto p = ph.make_policy(at, dur);
    t += p->duration();
    at = p->end_position();
  }
  return t;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(seed ^ splitmix(stream)); }

RecordedBag record_plan(const ProjectConfig& cfg, const SessionPlan& plan, std::uint64_t seed, AuxMode aux,
                        const CableErrorModel* model) {
  SessionOptions o = cfg.session_options(seed);
  o.aux_mode = aux;
  const SessionResult r = simulate_plan(plan, model ? *model : cfg.error_model, cfg.limits, o);
  nlohmann::json meta{{"seed", seed},
                      {"state_hz", o.state_hz},
                      {"truth_hz", o.truth_hz},
                      {"physics_hz", o.physics_hz},
                      {"time_scale", o.time_scale},
                      {"aux_mode", aux == AuxMode::Catalog ? "catalog" : "noise"}};
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& ph : plan.phases) labels.push_back(ph.label);
  meta["phases"] = labels;
  return make_bag(r, default_feature_schema(), meta);
}

SessionPlan calibration_plan(const ProjectConfig& cfg, const std::vector<Trajectory>& trajectories,
                             std::uint64_t seed, double test_duration_s) {
  SessionPlan plan;
  plan.phases = training_phases(cfg, trajectories);
  plan.phases.push_back(goto_phase("to-center", cfg.limits.center(), cfg.trajectory.speeds));
  plan.phases.push_back(random_phase(kTestLabel, cfg.limits, cfg.trajectory.random, test_duration_s,
                                     derive_seed(seed, kTestMotion)));
  return plan;
}

SessionPlan calibration_plan(const ProjectConfig& cfg, Direction d, const std::vector<double>& sparsities,
                             std::uint64_t seed, double test_duration_s) {
  return calibration_plan(cfg, calibration_trajectories(cfg, d, sparsities), seed, test_duration_s);
}

namespace {

std::size_t block_split_row(const Dataset& d) {
  if (d.rows() < 2) throw PreconditionError("split needs at least 2 rows");
  const auto n = static_cast<std::size_t>(std::llround(SplitPolicy{}.train_fraction * static_cast<double>(d.rows())));
  return std::clamp<std::size_t>(n, 1, d.rows() - 1);
}

}  // namespace

Dataset training_rows(const Dataset& d) {
  Dataset t = d.with_label(kTrainLabel);
  return t.rows() > 0 ? t : d.rows_range(0, block_split_row(d));
}

Dataset test_rows(const Dataset& d) {
  Dataset t = d.with_label(kTestLabel);
  return t.rows() > 0 ? t : d.rows_range(block_split_row(d), d.rows());
}

TrainTest split_by_label(const RecordedBag& bag, const ProjectConfig& cfg, FeatureSet set) {
  const Dataset all = synchronize(bag, cfg.trajectory.sync_tolerance, set);
  return {all.with_label(kTrainLabel), all.with_label(kTestLabel)};
}

std::unique_ptr<CalibrationModel> fit_model(ModelKind kind, const Dataset& train, const ProjectConfig& cfg,
                                            std::uint64_t seed) {
  TrainOptions o;
  o.kind = kind;
  o.mode = cfg.training.mode;
  o.ridge = cfg.training.ridge;
  o.allow_large_poly = cfg.training.allow_large_poly;
  o.mlp = cfg.mlp_config();
  o.seed = derive_seed(seed, kModelInit);
  return train_model(train, o);
}

CalibrationRun run_calibration(const ProjectConfig& cfg, std::uint64_t seed) {
  return run_calibration(cfg, seed, cfg.trajectory.direction, cfg.training.models);
}

CalibrationRun run_calibration(const ProjectConfig& cfg, std::uint64_t seed, Direction d,
                               const std::vector<ModelKind>& kinds) {
  CalibrationRun run;
  run.bag = record_plan(cfg,
                        calibration_plan(cfg, d, cfg.trajectory.sparsities, seed, cfg.trajectory.test_duration_s),
                        seed);
  auto tt = split_by_label(run.bag, cfg, cfg.training.features);
  run.train = std::move(tt.train);
  run.test = std::move(tt.test);
  run.offset = fit_offset(run.train);
  for (ModelKind k : kinds) {
    auto m = fit_model(k, run.train, cfg, seed);
    run.reports.push_back(evaluate(*m, run.offset, run.test, short_label(k)));
    run.models.push_back({short_label(k), std::move(m)});
  }
  return run;
}

std::vector<SweepRow> direction_sweep(const ProjectConfig& cfg, std::uint64_t seed,
                                      const std::vector<Direction>& directions, const std::vector<ModelKind>& kinds) {
  std::vector<SweepRow> rows;
  for (Direction d : directions) {
    CalibrationRun run = run_calibration(cfg, seed, d, kinds);
    rows.push_back({d, std::move(run.reports)});
  }
  return rows;
}

std::string to_string(DriftCondition c) {
  switch (c) {
    case DriftCondition::Loaded: return "loaded";
    case DriftCondition::Unloaded: return "unloaded";
    case DriftCondition::Idle: return "idle";
  }
  return "?";
}

DriftCondition parse_drift_condition(const std::string& s) {
  if (s == "loaded") return DriftCondition::Loaded;
  if (s == "unloaded") return DriftCondition::Unloaded;
  if (s == "idle") return DriftCondition::Idle;
  throw InvalidArgument("unknown drift condition '" + s + "'");
}

DriftSession record_drift_session(const ProjectConfig& cfg, std::uint64_t seed, DriftCondition condition,
                                  const std::vector<double>& sparsities) {
  return record_drift_session(cfg, seed, condition,
                              calibration_trajectories(cfg, cfg.trajectory.direction, sparsities));
}

DriftSession record_drift_session(const ProjectConfig& cfg, std::uint64_t seed, DriftCondition condition,
                                  const std::vector<Trajectory>& trajectories) {
  const auto& tc = cfg.trajectory;
  const auto& ec = cfg.eval;
  DriftSession ds;
  ds.seconds_per_hour = 3600.0 / tc.time_scale;

  SessionPlan plan;
  plan.phases = training_phases(cfg, trajectories);
  ds.origin = plan_duration(plan, cfg.limits);

  const std::uint64_t test_seed = derive_seed(seed, kTestMotion);
  for (int h = 0; h < ec.hours; ++h) {
    plan.phases.push_back(goto_phase("to-center", cfg.limits.center(), tc.speeds));
    plan.phases.push_back(random_phase(kTestLabel, cfg.limits, tc.random, ec.window_s, test_seed));
    Phase op;
    switch (condition) {
      case DriftCondition::Loaded:
      case DriftCondition::Unloaded:
        op = random_phase("operation", cfg.limits, tc.random, 0.0, derive_seed(seed, kOperation + h),
                          condition == DriftCondition::Loaded ? ec.load_g : 0.0, false);
        break;
      case DriftCondition::Idle:
        op = hold_phase("operation", 0.0, true);
        break;
    }
    op.end_at = ds.origin + (h + 1) * ds.seconds_per_hour;
    plan.phases.push_back(std::move(op));
  }

  ds.bag = record_plan(cfg, plan, seed);
  for (const auto& s : ds.bag.segments) {
    if (s.label != kTestLabel) continue;
    const double h = std::floor((s.begin - ds.origin) / ds.seconds_per_hour);
    if (s.end > ds.origin + (h + 1.0) * ds.seconds_per_hour + 1e-9)
      throw PreconditionError("drift test window does not fit in its hour; lower time_scale or window_s");
  }
  return ds;
}

DriftResult drift_study(const ProjectConfig& cfg, std::uint64_t seed, DriftCondition condition,
                        const std::vector<ModelKind>& kinds) {
  const DriftSession ds = record_drift_session(cfg, seed, condition, cfg.trajectory.sparsities);
  DriftResult res;
  res.condition = condition;
  res.origin = ds.origin;
  res.seconds_per_hour = ds.seconds_per_hour;

  const Dataset all = synchronize(ds.bag, cfg.trajectory.sync_tolerance, cfg.training.features);
  const Dataset train = all.with_label(kTrainLabel);
  const Dataset test = all.with_label(kTestLabel);
  const FixedOffsetModel fo = fit_offset(train);
  const DecayOptions dopt{res.origin, cfg.eval.hours, res.seconds_per_hour};
  res.curves.push_back({"fixed-offset", decay_curve(fo, fo, test, dopt)});
  for (ModelKind k : kinds) {
    if (k == ModelKind::Offset) continue;
    const auto m = fit_model(k, train, cfg, seed);
    res.curves.push_back({short_label(k), decay_curve(*m, fo, test, dopt)});
  }
  return res;
}

std::vector<RmseReport> feature_robustness(const ProjectConfig& cfg, std::uint64_t seed, bool include_mlp_full) {
  if (cfg.trajectory.sparsities.empty()) throw ConfigError("no training sparsities configured");
  const DriftSession ds =
      record_drift_session(cfg, seed, DriftCondition::Unloaded, std::vector<double>{cfg.trajectory.sparsities.front()});
  const double tol = cfg.trajectory.sync_tolerance;
  const Dataset sel = synchronize(ds.bag, tol, FeatureSet::Selected);
  const Dataset full = synchronize(ds.bag, tol, FeatureSet::Full);
  const Dataset sel_train = sel.with_label(kTrainLabel), sel_test = sel.with_label(kTestLabel);
  const Dataset full_train = full.with_label(kTrainLabel), full_test = full.with_label(kTestLabel);
  const FixedOffsetModel fo = fit_offset(sel_train);
  const FixedOffsetModel fo_full = fit_offset(full_train);  // same offsets, full-width signature
  const DecayOptions dopt{ds.origin, cfg.eval.hours, ds.seconds_per_hour};
  const OutputMode mode = cfg.training.mode;
  const std::uint64_t ms = derive_seed(seed, kModelInit);

  std::vector<RmseReport> out;
  auto add = [&](const CalibrationModel& m, bool is_full, const std::string& label) {
    out.push_back(mean_report(decay_curve(m, is_full ? fo_full : fo, is_full ? full_test : sel_test, dopt), label));
  };
  add(fo, false, "fixed-offset");
  add(fit_linear(sel_train, mode, cfg.training.ridge), false, "linear-selected");
  add(fit_linear(full_train, mode, cfg.training.ridge), true, "linear-full");
  add(fit_mlp(sel_train, mode, cfg.training.mlp, ms), false, "mlp-selected");
  if (include_mlp_full) add(fit_mlp(full_train, mode, cfg.training.mlp, ms), true, "mlp-full");
  MlpConfig large = MlpConfig::large();
  large.epochs = cfg.training.mlp.epochs;
  large.learning_rate = cfg.training.mlp.learning_rate;
  large.batch_size = cfg.training.mlp.batch_size;
  add(fit_mlp(full_train, mode, large, ms), true, "large-mlp-full");
  return out;
}

HomingResult homing_study(const ProjectConfig& cfg, std::uint64_t seed, ModelKind kind) {
  const auto& tc = cfg.trajectory;
  const int n = cfg.eval.homings;
  if (tc.sparsities.size() < 2) throw ConfigError("the homing study needs at least two training sparsities");
  const std::uint64_t test_seed = derive_seed(seed, kTestMotion);
  auto test_label = [](int k) { return std::string(kTestLabel) + "/" + std::to_string(k); };
  auto tests = [&](SessionPlan& plan, int k, bool homing) {
    Phase g = goto_phase("to-center", cfg.limits.center(), tc.speeds);
    g.homing_before = homing;
    plan.phases.push_back(std::move(g));
    plan.phases.push_back(random_phase(test_label(k), cfg.limits, tc.random, cfg.eval.window_s, test_seed));
  };

  // Part 1 is every sparsity but the last; part 2 is the last.
  const std::vector<double> part1(tc.sparsities.begin(), tc.sparsities.end() - 1);
  const std::vector<double> part2{tc.sparsities.back()};

  SessionPlan a;
  a.phases = training_phases(cfg, tc.direction, tc.sparsities);
  tests(a, 0, false);
  for (int k = 1; k <= n; ++k) tests(a, k, true);

  SessionPlan b;
  b.phases = training_phases(cfg, tc.direction, part1);
  tests(b, 0, false);
  for (int k = 1; k <= n; ++k) {
    if (k == 1) {
      Phase g = goto_phase("to-start", cfg.limits.center(), tc.speeds);
      g.homing_before = true;
      b.phases.push_back(std::move(g));
      for (auto& p : training_phases(cfg, tc.direction, part2, "train2")) b.phases.push_back(std::move(p));
      tests(b, k, false);
    } else {
      tests(b, k, true);
    }
  }

  HomingResult res;
  res.kind = kind;
  {
    const Dataset all = synchronize(record_plan(cfg, a, seed), tc.sync_tolerance, cfg.training.features);
    const Dataset train = all.with_label(kTrainLabel);
    const FixedOffsetModel fo = fit_offset(train);
    const auto m = fit_model(kind, train, cfg, seed);
    for (int k = 0; k <= n; ++k) res.single.push_back(evaluate(*m, fo, all.with_label(test_label(k)), test_label(k)));
  }
  {
    const Dataset all = synchronize(record_plan(cfg, b, seed), tc.sync_tolerance, cfg.training.features);
    const Dataset train1 = all.with_label(kTrainLabel);
    const Dataset train12 = concat({train1, all.with_label("train2")});
    const FixedOffsetModel fo1 = fit_offset(train1);
    const FixedOffsetModel fo12 = fit_offset(train12);
    const auto m1 = fit_model(kind, train1, cfg, seed);
    const auto m12 = fit_model(kind, train12, cfg, seed);
    for (int k = 0; k <= n; ++k) {
      const Dataset t = all.with_label(test_label(k));
      res.incremental.push_back(k == 0 ? evaluate(*m1, fo1, t, test_label(k)) : evaluate(*m12, fo12, t, test_label(k)));
    }
  }
  return res;
}

namespace {

nlohmann::json reports_json(const std::vector<RmseReport>& rs) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rs) a.push_back(to_json(r));
  return a;
}

}  // namespace

nlohmann::json to_json(const CalibrationRun& r) {
  return {{"train_rows", r.train.rows()}, {"test_rows", r.test.rows()}, {"reports", reports_json(r.reports)}};
}

nlohmann::json to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& row : rows) a.push_back({{"direction", to_string(row.direction)}, {"reports", reports_json(row.reports)}});
  return a;
}

nlohmann::json to_json(const DriftResult& r) {
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : r.curves) curves.push_back({{"model", c.model}, {"hours", reports_json(c.hours)}});
  return {{"condition", to_string(r.condition)},
          {"origin_s", r.origin},
          {"seconds_per_hour", r.seconds_per_hour},
          {"curves", curves}};
}

nlohmann::json to_json(const HomingResult& r) {
  return {{"model", to_string(r.kind)}, {"single", reports_json(r.single)}, {"incremental", reports_json(r.incremental)}};
}

}  // namespace cablecal
