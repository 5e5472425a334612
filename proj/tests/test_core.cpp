#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cablecal/core.hpp"

using namespace cablecal;

TEST_CASE("joint limits validate and contain") {
  CHECK_THROWS_AS(JointLimits({0, 0, 0}, {90, 0, 250}), InvalidArgument);
  const auto lim = JointLimits::defaults();
  CHECK(lim.center() == JointVector{45.0, 45.0, 125.0});
  CHECK(lim.contains({0, 90, 250}));
  CHECK_FALSE(lim.contains({-0.1, 10, 10}));
  CHECK(lim.contains({-0.1, 10, 10}, 0.2));
  CHECK_FALSE(validate_joint_vector({1, std::nan(""), 3}, lim));
  CHECK_FALSE(validate_joint_vector({1, 2, 251}, lim));
  CHECK(validate_joint_vector({1, 2, 249}, lim));
}

TEST_CASE("feature schema selection and hash") {
  FeatureSchema s({"a", "b", "c"}, {true, false, true});
  CHECK(s.dim_full() == 3);
  CHECK(s.dim_selected() == 2);
  CHECK(s.selected_indices() == std::vector<std::size_t>{0, 2});
  CHECK(s.index_of("c") == 2);
  CHECK_THROWS(s.index_of("zz"));
  CHECK_THROWS_AS(FeatureSchema({"a", "b"}, {true}), InvalidArgument);

  FeatureSchema reordered({"b", "a", "c"}, {false, true, true});
  FeatureSchema remasked({"a", "b", "c"}, {true, true, true});
  CHECK(s.hash() != reordered.hash());
  CHECK(s.hash() != remasked.hash());
  CHECK(s.hash() == FeatureSchema({"a", "b", "c"}, {true, false, true}).hash());

  nlohmann::json j = s;
  CHECK(j.get<FeatureSchema>() == s);
}

TEST_CASE("fnv1a matches published vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
  CHECK(parse_hex64(hex64(0x0123456789abcdefULL)) == 0x0123456789abcdefULL);
  CHECK(hex64(1).size() == 16);
}

TEST_CASE("double formatting round-trips exactly") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(parse_double(format_double(x)) == x);
  }
  CHECK(parse_double(format_double(0.1)) == 0.1);
  CHECK_THROWS_AS(parse_double("1.0x"), FormatError);
  CHECK_THROWS_AS(parse_double(""), FormatError);
}

TEST_CASE("joint vector json") {
  nlohmann::json j = JointVector{1.5, -2, 3};
  CHECK(j.get<JointVector>() == JointVector{1.5, -2, 3});
  const auto lim = JointLimits::defaults();
  CHECK(limits_from_json(limits_to_json(lim)) == lim);
}

TEST_CASE("warning handler is replaceable") {
  std::string got;
  auto prev = set_warning_handler([&](const std::string& m) { got = m; });
  warn("hello");
  set_warning_handler(prev);
  CHECK(got == "hello");
}

TEST_CASE("feature set names") {
  CHECK(parse_feature_set(to_string(FeatureSet::Full)) == FeatureSet::Full);
  CHECK(parse_feature_set(to_string(FeatureSet::Selected)) == FeatureSet::Selected);
  CHECK_THROWS(parse_feature_set("some"));
}
