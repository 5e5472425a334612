#include <doctest.h>

#include <fstream>

#include "cablecal/config.hpp"
#include "cablecal/manifest.hpp"
#include "helpers.hpp"

using namespace cablecal;

TEST_CASE("shipped default config equals the built-in defaults") {
  const auto c = load_config(std::filesystem::path(CABLECAL_SOURCE_DIR) / "config" / "default.toml");
  CHECK(config_hash(c) == config_hash(ProjectConfig{}));
  CHECK(c.error_model == CableErrorModel::defaults());
}

TEST_CASE("toml overrides and json round-trip") {
  const auto c = parse_config_toml(R"(
seed = 7
[trajectory]
sparsities = ["1/5", 0.25]
direction = "j1j2j3"
[training]
models = ["linear", "poly2"]
ridge = 0.5
[error_model.j2]
homing_offset_shift = 0.2
)");
  CHECK(c.seed == 7);
  CHECK(c.trajectory.sparsities == std::vector<double>{0.2, 0.25});
  CHECK(c.trajectory.direction == Direction::J1J2J3);
  CHECK(c.training.models == std::vector<ModelKind>{ModelKind::Linear, ModelKind::Poly2});
  CHECK(c.training.ridge == 0.5);
  CHECK(c.error_model.joints[1].homing_offset_shift == 0.2);
  CHECK(config_hash(c) != config_hash(ProjectConfig{}));
  const auto back = config_from_json(to_json(c));
  CHECK(config_hash(back) == config_hash(c));
}

TEST_CASE("bad configs are config errors") {
  CHECK_THROWS_AS(parse_config_toml("seed = "), ConfigError);
  CHECK_THROWS_AS(parse_config_toml("sed = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config_toml("[training]\nridge = -1.0"), ConfigError);
  CHECK_THROWS_AS(parse_config_toml("[trajectory]\nsparsities = [\"3/4\"]"), ConfigError);
  CHECK_THROWS_AS(parse_config_toml("[training]\nmodels = []"), ConfigError);
  CHECK_THROWS_AS(parse_config_toml("[limits]\nmin = [0, 0, 300]"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent.toml"), ConfigError);
}

TEST_CASE("session options follow the config") {
  ProjectConfig c;
  c.trajectory.time_scale = 60.0;
  const auto o = c.session_options(9);
  CHECK(o.seed == 9);
  CHECK(o.time_scale == 60.0);
  CHECK(o.state_hz == 30.0);
  CHECK(o.truth_hz == 100.0);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto dir = testutil::scratch("sha");
  std::ofstream(dir / "f.txt") << "abc";
  CHECK(sha256_file(dir / "f.txt") == sha256_hex("abc"));
}

TEST_CASE("manifest id depends on inputs only") {
  RunManifest m;
  m.tool_version = "1.0.0";
  m.command = "pipeline";
  m.config_hash = config_hash(ProjectConfig{});
  m.seed = 1;
  const auto id = m.id();
  CHECK(id.size() == 16);
  RunManifest o = m;
  o.outputs["x"] = "y";
  o.stages.push_back({"train", "ok", 1.0, 0.0, {"x"}, ""});
  CHECK(o.id() == id);
  RunManifest s = m;
  s.seed = 2;
  CHECK(s.id() != id);
  RunManifest i = m;
  i.inputs["data.csv"] = sha256_hex("abc");
  CHECK(i.id() != id);
  const auto j = o.to_json();
  CHECK(j.at("id") == id);
  CHECK(j.at("stages").size() == 1);
}
