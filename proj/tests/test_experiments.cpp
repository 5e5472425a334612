#include <doctest.h>

#include "cablecal/experiments.hpp"

using namespace cablecal;

TEST_CASE("sub-seeds are distinct and stable") {
  CHECK(derive_seed(1, 5) == derive_seed(1, 5));
  CHECK(derive_seed(1, 5) != derive_seed(2, 5));
  CHECK(derive_seed(1, 5) != derive_seed(1, 6));
}

TEST_CASE("calibration plan labels and durations") {
  ProjectConfig cfg;
  const auto plan = calibration_plan(cfg, Direction::J2J3, {0.5}, 1, 30.0);
  double train = 0.0;
  bool has_test = false;
  for (const auto& p : plan.phases) {
    if (p.label == kTrainLabel) train += trajectory_duration(make_calibration_trajectory(Direction::J2J3, 0.5, cfg.limits), cfg.trajectory.speeds);
    has_test = has_test || p.label == kTestLabel;
  }
  CHECK(has_test);
  CHECK(plan_duration(plan, cfg.limits) > train + 30.0);
  const auto bag = record_plan(cfg, plan, 1);
  const auto tt = split_by_label(bag, cfg);
  CHECK(tt.train.rows() > 0);
  CHECK(tt.test.rows() == doctest::Approx(30.0 * 30.0).epsilon(0.01));
  CHECK(tt.test.time[0] > tt.train.time[static_cast<Eigen::Index>(tt.train.rows()) - 1]);
  CHECK(bag.meta.at("seed") == 1);
}

TEST_CASE("unlabelled data falls back to a time-block split") {
  ProjectConfig cfg;
  SessionPlan plan;
  plan.phases.push_back(random_phase("session", cfg.limits, cfg.trajectory.random, 20.0, 3));
  const auto d = synchronize(record_plan(cfg, plan, 2));
  const auto tr = training_rows(d), te = test_rows(d);
  CHECK(tr.rows() + te.rows() == d.rows());
  CHECK(tr.rows() == static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(d.rows()))));
  CHECK(tr.time[static_cast<Eigen::Index>(tr.rows()) - 1] < te.time[0]);
}

TEST_CASE("drift session places one test window per hour") {
  ProjectConfig cfg;
  cfg.trajectory.time_scale = 60.0;
  cfg.eval.hours = 3;
  cfg.eval.window_s = 20.0;
  const auto s = record_drift_session(cfg, 4, DriftCondition::Loaded, std::vector<double>{0.5});
  CHECK(s.seconds_per_hour == doctest::Approx(60.0));
  const auto d = synchronize(s.bag);
  const auto test = d.with_label(kTestLabel);
  for (int h = 0; h < 3; ++h) {
    const auto w = test.time_window(s.origin + h * 60.0, s.origin + (h + 1) * 60.0);
    CHECK(w.rows() > 500);
  }
  cfg.eval.window_s = 80.0;
  CHECK_THROWS_AS(record_drift_session(cfg, 4, DriftCondition::Loaded, std::vector<double>{0.5}), PreconditionError);
  CHECK(parse_drift_condition("idle") == DriftCondition::Idle);
  CHECK_THROWS(parse_drift_condition("heavy"));
}

TEST_CASE("experiment results serialise") {
  ProjectConfig cfg;
  cfg.trajectory.test_duration_s = 30.0;
  cfg.trajectory.sparsities = {0.5};
  const auto run = run_calibration(cfg, 1, Direction::J2J3, {ModelKind::Offset, ModelKind::Linear});
  REQUIRE(run.reports.size() == 2);
  const auto j = to_json(run);
  CHECK(j.dump().find("linear") != std::string::npos);
  for (std::size_t k = 0; k < 3; ++k) CHECK(run.reports[1].model[k] < run.reports[1].raw[k]);
}
