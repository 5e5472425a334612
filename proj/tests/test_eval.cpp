#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "cablecal/eval.hpp"
#include "helpers.hpp"

using namespace cablecal;

namespace {

Dataset drifting(std::size_t n, double seconds) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd x = testutil::gaussian(static_cast<Eigen::Index>(n), 2, rng);
  Eigen::MatrixXd reported = x.leftCols(2) * 3.0;
  reported.conservativeResize(Eigen::NoChange, 3);
  reported.col(2) = x.col(0);
  Eigen::MatrixXd truth = reported;
  auto d = testutil::make_dataset(x, truth, reported);
  d.time = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), 0.0, seconds);
  // Error grows linearly with time.
  for (Eigen::Index r = 0; r < d.truth.rows(); ++r) d.truth.row(r).array() += 0.5 + d.time[r] / seconds;
  return d;
}

}  // namespace

TEST_CASE("rmse against a direct loop") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd a = testutil::gaussian(37, 3, rng), b = testutil::gaussian(37, 3, rng);
  const JointVector r = rmse(a, b);
  for (Eigen::Index j = 0; j < 3; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < 37; ++i) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    CHECK(r[static_cast<std::size_t>(j)] == doctest::Approx(std::sqrt(s / 37.0)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(rmse(a, b.topRows(3)), InvalidArgument);
  CHECK_THROWS_AS(rmse(Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3)), EmptyDatasetError);
}

TEST_CASE("percentage is relative to the fixed offset") {
  const auto d = drifting(1000, 100.0);
  const auto fo = fit_offset(d);
  const auto lin = fit_linear(d, OutputMode::OnError);
  const auto r = evaluate(lin, fo, d);
  CHECK(r.raw == rmse(d.reported, d.truth));
  CHECK(r.fixed_offset == rmse(fo.predict(d), d.truth));
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.percentage[j] == doctest::Approx(100.0 * r.model[j] / r.fixed_offset[j]));
  const auto self = evaluate(fo, fo, d);
  for (std::size_t j = 0; j < 3; ++j) CHECK(self.percentage[j] == doctest::Approx(100.0));
  const auto j = to_json(r);
  CHECK(j.at("label") == "linear");
  CHECK(j.at("percentage").size() == 3);
}

TEST_CASE("decay buckets are left-closed hours") {
  const auto d = drifting(3601, 6.0 * 600.0);
  const auto fo = fit_offset(d.time_window(0.0, 600.0));
  DecayOptions o;
  o.seconds_per_hour = 600.0;
  o.hours = 7;
  const auto curve = decay_curve(fo, fo, d, o);
  REQUIRE(curve.size() == 7);
  const auto w0 = d.time_window(0.0, 600.0);
  CHECK(curve[0].model == rmse(fo.predict(w0), w0.truth));
  CHECK(curve[0].samples == w0.rows());
  for (int h = 1; h < 6; ++h) CHECK(curve[static_cast<std::size_t>(h)].model[0] > curve[static_cast<std::size_t>(h - 1)].model[0]);
  CHECK(curve[5].hour == 5);
  // The last stamp sits exactly on 3600 s and opens hour 6.
  CHECK(curve[6].samples == 1);
  o.hours = 8;
  CHECK_FALSE(decay_curve(fo, fo, d, o)[7].present);
  o.seconds_per_hour = 0.0;
  CHECK_THROWS_AS(decay_curve(fo, fo, d, o), InvalidArgument);
}

TEST_CASE("mean report averages per joint") {
  RmseReport a, b, gone;
  a.raw = {1, 2, 3};
  a.fixed_offset = {2, 2, 2};
  a.model = {1, 1, 1};
  b.raw = {3, 2, 1};
  b.fixed_offset = {4, 2, 2};
  b.model = {2, 1, 0};
  gone.present = false;
  gone.model = {100, 100, 100};
  const auto m = mean_report({a, b, gone}, "avg");
  CHECK(m.label == "avg");
  CHECK(m.raw == JointVector{2, 2, 2});
  CHECK(m.model == JointVector{1.5, 1, 0.5});
  CHECK(m.percentage[0] == doctest::Approx(50.0));
  CHECK_FALSE(mean_report({gone}, "x").present);
}

TEST_CASE("latency bench reports ordered percentiles") {
  const auto d = drifting(200, 10.0);
  const auto lin = fit_linear(d, OutputMode::OnError);
  const auto r = bench_latency(lin, d, 2000, 3, 1000.0);
  CHECK(r.samples == 2000);
  CHECK(r.run_p99.size() == 3);
  CHECK(r.p50 <= r.p95);
  CHECK(r.p95 <= r.p99);
  CHECK(r.p99 > 0.0);
  CHECK(r.throughput_hz > 0.0);
  CHECK(r.pass == (r.p99 < 1e-3));
  CHECK_THROWS_AS(bench_latency(lin, d, 0, 3), InvalidArgument);
}

TEST_CASE("report csv is long format") {
  const auto d = drifting(100, 10.0);
  const auto fo = fit_offset(d);
  const auto dir = testutil::scratch("eval");
  write_reports_csv({evaluate(fo, fo, d)}, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "label,hour,joint,samples,raw,fixed_offset,model,percentage");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}
