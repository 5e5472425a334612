#include "cablecal/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "cablecal/manifest.hpp"

namespace cablecal {

namespace {

nlohmann::json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = n.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  throw ConfigError("unsupported TOML value (dates and times are not used)");
}

// Tracks which keys of a table were read so leftovers can be reported.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("[" + name_ + "] must be a table");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  const nlohmann::json& raw(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!has(k)) return;
    try {
      out = raw(k).template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(k) + " has the wrong type");
    }
  }

  void get_joint(const std::string& k, JointVector& out) {
    if (!has(k)) return;
    const auto& v = raw(k);
    if (!v.is_array() || v.size() != 3) throw ConfigError(where(k) + " must be an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(where(k) + " must be an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown key " + where(k));
  }

  std::string where(const std::string& k) const { return "'" + (name_.empty() ? k : name_ + "." + k) + "'"; }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> used_;
};

double sparsity_value(const nlohmann::json& v) {
  if (v.is_string()) return parse_sparsity(v.get<std::string>());
  if (v.is_number()) {
    const double s = v.get<double>();
    raster_levels(s);
    return s;
  }
  throw ConfigError("sparsity must be a number or a fraction string like \"1/4\"");
}

LayerPenalty read_penalty(Section& parent, const std::string& key, LayerPenalty p) {
  if (!parent.has(key)) return p;
  Section s(parent.raw(key), "training.mlp." + key);
  s.get("kernel_l1", p.kernel_l1);
  s.get("kernel_l2", p.kernel_l2);
  s.get("bias_l2", p.bias_l2);
  s.get("activity_l2", p.activity_l2);
  s.finish();
  return p;
}

nlohmann::json penalty_json(const LayerPenalty& p) {
  return {{"kernel_l1", p.kernel_l1}, {"kernel_l2", p.kernel_l2}, {"bias_l2", p.bias_l2}, {"activity_l2", p.activity_l2}};
}

}  // namespace

SessionOptions ProjectConfig::session_options(std::uint64_t session_seed) const {
  SessionOptions o;
  o.state_hz = trajectory.state_hz;
  o.truth_hz = trajectory.truth_hz;
  o.physics_hz = trajectory.physics_hz;
  o.time_scale = trajectory.time_scale;
  o.seed = session_seed;
  return o;
}

MlpConfig ProjectConfig::mlp_config() const {
  if (!training.large_mlp) return training.mlp;
  MlpConfig c = MlpConfig::large();
  c.epochs = training.mlp.epochs;
  c.learning_rate = training.mlp.learning_rate;
  c.batch_size = training.mlp.batch_size;
  c.beta1 = training.mlp.beta1;
  c.beta2 = training.mlp.beta2;
  c.epsilon = training.mlp.epsilon;
  return c;
}

void ProjectConfig::validate() const {
  const auto& t = trajectory;
  if (t.sparsities.empty()) throw ConfigError("trajectory.sparsities must not be empty");
  for (double s : t.sparsities) {
    try {
      raster_levels(s);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("trajectory.sparsities: ") + e.what());
    }
  }
  if (!(t.step > 0.0)) throw ConfigError("trajectory.step must be > 0");
  for (double v : t.speeds.speed.v)
    if (!(v > 0.0)) throw ConfigError("trajectory.speeds must be > 0");
  if (!(t.state_hz > 0.0 && t.truth_hz > 0.0 && t.physics_hz > 0.0)) throw ConfigError("sample rates must be > 0");
  if (!(t.sync_tolerance >= 0.0)) throw ConfigError("trajectory.sync_tolerance_s must be >= 0");
  if (!(t.time_scale > 0.0)) throw ConfigError("trajectory.time_scale must be > 0");
  if (!(t.test_duration_s > 0.0)) throw ConfigError("trajectory.test_duration_s must be > 0");
  if (!(t.random.range_fraction > 0.0 && t.random.range_fraction <= 1.0))
    throw ConfigError("trajectory.random.range_fraction must be in (0, 1]");
  if (training.models.empty()) throw ConfigError("training.models must not be empty");
  if (!(training.ridge >= 0.0)) throw ConfigError("training.ridge must be >= 0");
  if (training.mlp.epochs == 0 || training.mlp.batch_size == 0) throw ConfigError("training.mlp epochs and batch_size must be > 0");
  if (!(eval.budget_hz > 0.0)) throw ConfigError("eval.budget_hz must be > 0");
  if (eval.latency_samples == 0 || eval.latency_runs == 0) throw ConfigError("eval latency sample/run counts must be > 0");
  if (eval.hours < 1) throw ConfigError("eval.hours must be >= 1");
  if (!(eval.window_s > 0.0)) throw ConfigError("eval.window_s must be > 0");
  if (!(eval.load_g >= 0.0)) throw ConfigError("eval.load_g must be >= 0");
  if (eval.homings < 1) throw ConfigError("eval.homings must be >= 1");
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
}

ProjectConfig config_from_json(const nlohmann::json& j) {
  ProjectConfig c;
  try {
    Section top(j, "");
    top.get("seed", c.seed);
    top.get("repeats", c.repeats);

    if (top.has("limits")) {
      Section s(top.raw("limits"), "limits");
      JointVector lo = c.limits.min(), hi = c.limits.max();
      s.get_joint("min", lo);
      s.get_joint("max", hi);
      s.finish();
      c.limits = JointLimits(lo, hi);
    }

    if (top.has("error_model")) {
      nlohmann::json base = to_json(c.error_model);
      base.merge_patch(top.raw("error_model"));
      c.error_model = error_model_from_json(base);
    }

    if (top.has("trajectory")) {
      Section s(top.raw("trajectory"), "trajectory");
      auto& t = c.trajectory;
      if (s.has("direction")) t.direction = parse_direction(s.raw("direction").get<std::string>());
      if (s.has("sparsities")) {
        const auto& a = s.raw("sparsities");
        if (!a.is_array()) throw ConfigError("'trajectory.sparsities' must be an array");
        t.sparsities.clear();
        for (const auto& v : a) t.sparsities.push_back(sparsity_value(v));
      }
      s.get("step", t.step);
      s.get_joint("speeds", t.speeds.speed);
      s.get("state_hz", t.state_hz);
      s.get("truth_hz", t.truth_hz);
      s.get("physics_hz", t.physics_hz);
      s.get("sync_tolerance_s", t.sync_tolerance);
      s.get("time_scale", t.time_scale);
      s.get("test_duration_s", t.test_duration_s);
      if (s.has("random")) {
        Section r(s.raw("random"), "trajectory.random");
        r.get("range_fraction", t.random.range_fraction);
        r.get_joint("min_speed", t.random.min_speed);
        r.get_joint("max_speed", t.random.max_speed);
        r.get("min_segment_s", t.random.min_segment_s);
        r.finish();
      }
      s.finish();
    }

    if (top.has("training")) {
      Section s(top.raw("training"), "training");
      auto& t = c.training;
      if (s.has("models")) {
        t.models.clear();
        for (const auto& m : s.raw("models")) t.models.push_back(parse_model_kind(m.get<std::string>()));
      }
      if (s.has("mode")) t.mode = parse_output_mode(s.raw("mode").get<std::string>());
      if (s.has("features")) t.features = parse_feature_set(s.raw("features").get<std::string>());
      s.get("ridge", t.ridge);
      s.get("allow_large_poly", t.allow_large_poly);
      s.get("large_mlp", t.large_mlp);
      if (s.has("format")) t.format = parse_model_format(s.raw("format").get<std::string>());
      if (s.has("mlp")) {
        Section m(s.raw("mlp"), "training.mlp");
        m.get("hidden", t.mlp.hidden);
        m.get("epochs", t.mlp.epochs);
        m.get("learning_rate", t.mlp.learning_rate);
        m.get("batch_size", t.mlp.batch_size);
        m.get("beta1", t.mlp.beta1);
        m.get("beta2", t.mlp.beta2);
        m.get("epsilon", t.mlp.epsilon);
        t.mlp.hidden_penalty = read_penalty(m, "hidden_penalty", t.mlp.hidden_penalty);
        t.mlp.output_penalty = read_penalty(m, "output_penalty", t.mlp.output_penalty);
        m.finish();
      }
      s.finish();
    }

    if (top.has("eval")) {
      Section s(top.raw("eval"), "eval");
      auto& e = c.eval;
      s.get("budget_hz", e.budget_hz);
      s.get("latency_samples", e.latency_samples);
      s.get("latency_runs", e.latency_runs);
      s.get("hours", e.hours);
      s.get("window_s", e.window_s);
      s.get("load_g", e.load_g);
      s.get("homings", e.homings);
      s.finish();
    }
    top.finish();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ProjectConfig parse_config_toml(const std::string& text, const std::string& source) {
  toml::table tbl;
  try {
    tbl = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(msg.str());
  }
  return config_from_json(toml_to_json(tbl));
}

ProjectConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return config_from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_config_toml(ss.str(), path.string());
}

nlohmann::json to_json(const ProjectConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["repeats"] = c.repeats;
  j["limits"] = limits_to_json(c.limits);
  nlohmann::json em = to_json(c.error_model);
  em.erase("version");
  j["error_model"] = em;
  const auto& t = c.trajectory;
  j["trajectory"] = {{"direction", to_string(t.direction)},
                     {"sparsities", t.sparsities},
                     {"step", t.step},
                     {"speeds", t.speeds.speed},
                     {"state_hz", t.state_hz},
                     {"truth_hz", t.truth_hz},
                     {"physics_hz", t.physics_hz},
                     {"sync_tolerance_s", t.sync_tolerance},
                     {"time_scale", t.time_scale},
                     {"test_duration_s", t.test_duration_s},
                     {"random",
                      {{"range_fraction", t.random.range_fraction},
                       {"min_speed", t.random.min_speed},
                       {"max_speed", t.random.max_speed},
                       {"min_segment_s", t.random.min_segment_s}}}};
  nlohmann::json models = nlohmann::json::array();
  for (auto m : c.training.models) models.push_back(to_string(m));
  const auto& m = c.training.mlp;
  j["training"] = {{"models", models},
                   {"mode", to_string(c.training.mode)},
                   {"features", to_string(c.training.features)},
                   {"ridge", c.training.ridge},
                   {"allow_large_poly", c.training.allow_large_poly},
                   {"large_mlp", c.training.large_mlp},
                   {"format", to_string(c.training.format)},
                   {"mlp",
                    {{"hidden", m.hidden},
                     {"epochs", m.epochs},
                     {"learning_rate", m.learning_rate},
                     {"batch_size", m.batch_size},
                     {"beta1", m.beta1},
                     {"beta2", m.beta2},
                     {"epsilon", m.epsilon},
                     {"hidden_penalty", penalty_json(m.hidden_penalty)},
                     {"output_penalty", penalty_json(m.output_penalty)}}}};
  const auto& e = c.eval;
  j["eval"] = {{"budget_hz", e.budget_hz}, {"latency_samples", e.latency_samples}, {"latency_runs", e.latency_runs},
               {"hours", e.hours},         {"window_s", e.window_s},               {"load_g", e.load_g},
               {"homings", e.homings}};
  return j;
}

std::string config_hash(const ProjectConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace cablecal
