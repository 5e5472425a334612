#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "cablecal/data.hpp"
#include "cablecal/experiments.hpp"
#include "helpers.hpp"

using namespace cablecal;

namespace {

// Two-feature bag with state stamps k/state_hz and truth stamps m/truth_hz + shift.
RecordedBag grid_bag(double seconds, double state_hz, double truth_hz, double shift = 0.0) {
  RecordedBag b;
  b.schema = FeatureSchema({"p", "q"}, {true, false});
  const auto ns = static_cast<long>(std::floor(seconds * state_hz)) + 1;
  b.state_features.resize(ns, 2);
  for (long k = 0; k < ns; ++k) {
    const double t = static_cast<double>(k) / state_hz;
    b.state_time.push_back(t);
    b.state_features(k, 0) = t;
    b.state_features(k, 1) = -t;
    b.reported.push_back({t, 2 * t, 3 * t});
  }
  const auto nt = static_cast<long>(std::floor(seconds * truth_hz)) + 1;
  for (long m = 0; m < nt; ++m) {
    const double t = static_cast<double>(m) / truth_hz + shift;
    b.truth_time.push_back(t);
    b.truth.push_back({t, t, t});
  }
  return b;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("coincident streams pair exactly") {
  const auto b = grid_bag(10.0, 30.0, 30.0);
  const auto d = synchronize(b, 0.0);
  CHECK(d.rows() == b.state_count());
  for (Eigen::Index r = 0; r < d.truth.rows(); ++r) CHECK(d.truth(r, 0) == d.time[r]);
  CHECK(d.dim() == 1);
  const auto full = synchronize(b, 0.0, FeatureSet::Full);
  CHECK(full.dim() == 2);
}

TEST_CASE("30 Hz state against 100 Hz truth keeps every state sample") {
  for (double tol : {0.005, 0.010}) {
    const auto b = grid_bag(60.0, 30.0, 100.0);
    const auto d = synchronize(b, tol);
    CHECK(d.rows() == b.state_count());
    // Oracle: nearest 100 Hz stamp to k/30 is round(k * 10 / 3) / 100, at most 1/300 s away.
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(d.rows()); ++r) {
      const double want = std::round(d.time[r] * 100.0) / 100.0;
      REQUIRE(std::abs(d.truth(r, 0) - want) < 1e-12);
      REQUIRE(std::abs(d.truth(r, 0) - d.time[r]) <= tol);
    }
  }
}

TEST_CASE("zero tolerance on offset grids finds nothing") {
  const auto b = grid_bag(5.0, 30.0, 100.0, 0.0013);
  CHECK_THROWS_AS(synchronize(b, 0.0), EmptyDatasetError);
  RecordedBag empty = b;
  empty.truth.clear();
  empty.truth_time.clear();
  CHECK_THROWS_AS(synchronize(empty, 0.01), PreconditionError);
}

TEST_CASE("pairing is injective, nearest wins and ties go earlier") {
  // Binary-exact stamps so the tie is a real tie.
  RecordedBag b;
  b.schema = FeatureSchema({"p"}, {true});
  b.state_time = {0.0, 0.1875, 0.5, 1.0};
  b.state_features = Eigen::MatrixXd::Zero(4, 1);
  b.reported.assign(4, JointVector{});
  b.truth_time = {0.25, 0.75};
  b.truth = {{1, 1, 1}, {2, 2, 2}};
  const auto d = synchronize(b, 0.3);
  // 0.5 ties between both truths, takes the earlier one and loses it to the nearer 0.1875.
  REQUIRE(d.rows() == 2);
  CHECK(d.time[0] == 0.1875);
  CHECK(d.truth(0, 0) == 1.0);
  CHECK(d.time[1] == 1.0);
  CHECK(d.truth(1, 0) == 2.0);

  RecordedBag tie;
  tie.schema = b.schema;
  tie.state_time = {0.5};
  tie.state_features = Eigen::MatrixXd::Zero(1, 1);
  tie.reported = {JointVector{}};
  tie.truth_time = {0.25, 0.75};
  tie.truth = {{1, 1, 1}, {2, 2, 2}};
  CHECK(synchronize(tie, 0.3).truth(0, 0) == 1.0);

  RecordedBag pair = tie;
  pair.state_time = {0.5, 0.625};
  pair.state_features = Eigen::MatrixXd::Zero(2, 1);
  pair.reported.assign(2, JointVector{});
  pair.truth_time = {0.5625};
  pair.truth = {{3, 3, 3}};
  // Equal gaps from two states: the earlier state keeps the truth sample.
  const auto p = synchronize(pair, 0.1);
  REQUIRE(p.rows() == 1);
  CHECK(p.time[0] == 0.5);
}

TEST_CASE("every pair respects the tolerance (property)") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(0.0, 0.02);
  for (int trial = 0; trial < 20; ++trial) {
    RecordedBag b;
    b.schema = FeatureSchema({"p"}, {true});
    double t = 0.0;
    for (int i = 0; i < 200; ++i) {
      t += 0.001 + jitter(rng);
      b.state_time.push_back(t);
    }
    b.state_features = Eigen::MatrixXd::Zero(200, 1);
    b.reported.assign(200, JointVector{});
    t = 0.0;
    for (int i = 0; i < 300; ++i) {
      t += 0.001 + jitter(rng);
      b.truth_time.push_back(t);
      b.truth.push_back({t, 0, 0});
    }
    const double tol = 0.004;
    Dataset d;
    try {
      d = synchronize(b, tol);
    } catch (const EmptyDatasetError&) {
      continue;
    }
    std::vector<double> used;
    for (Eigen::Index r = 0; r < d.truth.rows(); ++r) {
      CHECK(std::abs(d.truth(r, 0) - d.time[r]) <= tol);
      used.push_back(d.truth(r, 0));
    }
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  }
}

TEST_CASE("split statistics come from the train block") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd x = testutil::gaussian(1000, 3, rng);
  x.col(2).setConstant(4.0);
  for (Eigen::Index r = 800; r < 1000; ++r) x(r, 0) += 10.0;  // shifted test block
  const auto d = testutil::make_dataset(x, Eigen::MatrixXd::Zero(1000, 3), Eigen::MatrixXd::Zero(1000, 3));
  const Split s = split_and_normalize(d);
  CHECK(s.train.rows() == 800);
  CHECK(s.test.rows() == 200);
  CHECK(s.train.time[799] < s.test.time[0]);
  CHECK(s.test.time[0] == d.time[800]);
  CHECK(s.stats.constant[2]);
  CHECK(s.stats.sd[2] == 1.0);
  CHECK(s.train.inputs.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.test.inputs.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::abs(s.train.inputs.col(0).mean()) < 1e-12);
  // The test block is not re-centred by its own mean.
  CHECK(s.test.inputs.col(0).mean() > 5.0);
  CHECK(s.train.normalized);

  const auto again = normalize_with(d.rows_range(800, 1000), s.stats);
  CHECK(again.inputs == s.test.inputs);
  CHECK_THROWS(split_and_normalize(d.rows_range(0, 1)));
}

TEST_CASE("k-fold blocks are contiguous") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = testutil::gaussian(100, 2, rng);
  const auto d = testutil::make_dataset(x, Eigen::MatrixXd::Zero(100, 3), Eigen::MatrixXd::Zero(100, 3));
  const auto folds = kfold_blocks(d, 4);
  REQUIRE(folds.size() == 4);
  std::size_t total = 0;
  for (const auto& f : folds) {
    total += f.test.rows();
    CHECK(f.train.rows() + f.test.rows() == 100);
  }
  CHECK(total == 100);
  CHECK(folds[1].test.time[0] == d.time[25]);
}

TEST_CASE("concat") {
  std::mt19937_64 rng(3);
  const auto a = testutil::make_dataset(testutil::gaussian(10, 2, rng), testutil::gaussian(10, 3, rng),
                                        testutil::gaussian(10, 3, rng));
  const auto b = testutil::make_dataset(testutil::gaussian(7, 2, rng), testutil::gaussian(7, 3, rng),
                                        testutil::gaussian(7, 3, rng));
  const auto one = concat({a});
  CHECK(one.inputs == a.inputs);
  CHECK(one.truth == a.truth);
  CHECK(one.sources == a.sources);
  const auto ab = concat({a, b});
  CHECK(ab.rows() == 17);
  REQUIRE(ab.sources.size() == 2);
  CHECK(ab.sources[1].row_begin == 10);
  CHECK(ab.sources[1].row_end == 17);
  auto c = b;
  c.schema = FeatureSchema({"x0", "x1"}, {true, false});
  CHECK_THROWS_AS(concat({a, c}), SchemaMismatch);
  CHECK_THROWS(concat({}));
}

TEST_CASE("dataset files round-trip bit-identically") {
  const auto dir = testutil::scratch("dataset");
  ProjectConfig cfg;
  SessionPlan plan;
  plan.phases.push_back(random_phase("train", cfg.limits, cfg.trajectory.random, 30.0, 2));
  plan.phases.push_back(random_phase("test", cfg.limits, cfg.trajectory.random, 10.0, 3));
  const auto bag = record_plan(cfg, plan, 4);
  Dataset d = synchronize(bag, 0.01, FeatureSet::Full);
  d.manifest_id = "0123456789abcdef";
  write_dataset(d, dir / "a.csv");
  const Dataset back = read_dataset(dir / "a.csv");
  CHECK(back.inputs == d.inputs);
  CHECK(back.truth == d.truth);
  CHECK(back.reported == d.reported);
  CHECK(back.time == d.time);
  CHECK(back.schema == d.schema);
  CHECK(back.feature_set == FeatureSet::Full);
  CHECK(back.sources == d.sources);
  CHECK(back.manifest_id == d.manifest_id);
  write_dataset(back, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv.json") == slurp(dir / "b.csv.json"));

  CHECK(back.with_label("test").rows() + back.with_label("train").rows() == back.rows());
  CHECK(back.time_window(5.0, 10.0).rows() == 150);

  // A damaged schema hash is caught.
  auto meta = nlohmann::json::parse(slurp(dir / "a.csv.json"));
  meta["schema_hash"] = "0000000000000000";
  std::ofstream(dir / "a.csv.json") << meta.dump();
  CHECK_THROWS(read_dataset(dir / "a.csv"));
}

TEST_CASE("bags round-trip") {
  const auto dir = testutil::scratch("bag");
  ProjectConfig cfg;
  SessionPlan plan;
  plan.phases.push_back(random_phase("train", cfg.limits, cfg.trajectory.random, 12.0, 2, 500.0));
  const auto bag = record_plan(cfg, plan, 9);
  write_bag(bag, dir / "bag");
  const auto back = read_bag(dir / "bag");
  CHECK(back.state_time == bag.state_time);
  CHECK(back.truth_time == bag.truth_time);
  CHECK(back.state_features == bag.state_features);
  CHECK(back.reported == bag.reported);
  CHECK(back.truth == bag.truth);
  CHECK(back.segments == bag.segments);
  CHECK(back.meta == bag.meta);
  CHECK(back.schema == bag.schema);
  const auto d1 = synchronize(bag);
  const auto d2 = synchronize(back);
  CHECK(d1.inputs == d2.inputs);
}

TEST_CASE("bag validation") {
  auto b = grid_bag(1.0, 30.0, 100.0);
  b.validate();
  std::swap(b.state_time[3], b.state_time[4]);
  CHECK_THROWS_AS(b.validate(), FormatError);
  auto w = grid_bag(1.0, 30.0, 100.0);
  w.state_features.conservativeResize(Eigen::NoChange, 3);
  CHECK_THROWS_AS(w.validate(), FormatError);
}
