// cablecal: trajectory generation, simulated recording, training, and
// evaluation of joint calibration models.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <CLI11.hpp>

#include "cablecal/config.hpp"
#include "cablecal/data.hpp"
#include "cablecal/eval.hpp"
#include "cablecal/experiments.hpp"
#include "cablecal/manifest.hpp"
#include "cablecal/models.hpp"
#include "cablecal/trajectory.hpp"

namespace fs = std::filesystem;
using namespace cablecal;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr const char* kModelExt = ".ccm";
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct StageFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::size_t repeats = 0;
  double time_scale = 0.0;
  std::string format;
  bool emit_plot_data = false;
};

std::string slug(std::string s) {
  std::replace(s.begin(), s.end(), '/', '-');
  return s;
}

void write_json(const nlohmann::json& j, const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

/// Paths given on the command line are relative to the working directory,
/// not the output directory.
fs::path user_path(const std::string& s) { return s.empty() ? fs::path() : fs::absolute(s); }

double parse_load(std::string s) {
  if (!s.empty() && (s.back() == 'g' || s.back() == 'G')) s.pop_back();
  const double v = parse_double(s);
  if (!(v >= 0.0)) throw InvalidArgument("load must be >= 0");
  return v;
}

/// Tracks stages, their outputs, and the manifest of one invocation.
class Run {
 public:
  Run(const ProjectConfig& cfg, const Globals& g, std::string command, const std::vector<fs::path>& inputs)
      : cfg_(cfg), out_dir_(g.out_dir) {
    manifest_.tool_version = kToolVersion;
    manifest_.command = std::move(command);
    manifest_.config_hash = config_hash(cfg);
    manifest_.seed = cfg.seed;
    manifest_.repeats = cfg.repeats;
    for (const auto& p : inputs) {
      if (!fs::exists(p)) continue;  // reported by the stage that reads it
      hash_into(manifest_.inputs, p);
    }
  }

  const ProjectConfig& cfg() const { return cfg_; }
  std::string id() const { return manifest_.id(); }

  /// Registers an output path (absolute, or relative to the output directory)
  /// with the current stage.
  fs::path out(const fs::path& p) {
    const fs::path full = p.is_absolute() ? p : out_dir_ / p;
    if (current_) current_->outputs.push_back(full.generic_string());
    return full;
  }

  void add_simulated(double s) {
    if (current_) current_->simulated_s += s;
  }

  template <class F>
  void stage(const std::string& name, F&& fn) {
    StageRecord rec;
    rec.name = name;
    current_ = &rec;
    std::cerr << "[" << name << "]" << std::flush;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.status = "failed";
      rec.error = e.what();
      for (const auto& o : rec.outputs) {
        std::error_code ec;
        fs::remove_all(o, ec);
        fs::remove(sidecar_path(o), ec);
      }
      rec.outputs.clear();
      current_ = nullptr;
      manifest_.stages.push_back(rec);
      std::cerr << " failed\n";
      write_manifest();
      throw StageFailed(name + ": " + e.what());
    }
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    current_ = nullptr;
    if (rec.simulated_s > 0.0)
      std::fprintf(stderr, " ok (%.2f s wall, %.0f s simulated)\n", rec.wall_s, rec.simulated_s);
    else
      std::fprintf(stderr, " ok (%.2f s)\n", rec.wall_s);
    manifest_.stages.push_back(std::move(rec));
  }

  void finish() {
    for (const auto& s : manifest_.stages)
      for (const auto& o : s.outputs) hash_into(manifest_.outputs, o);
    write_manifest();
  }

 private:
  static void hash_into(std::map<std::string, std::string>& m, const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) m[e.path().generic_string()] = sha256_file(e.path());
    } else if (fs::is_regular_file(p)) {
      m[p.generic_string()] = sha256_file(p);
      const fs::path side = sidecar_path(p);
      if (fs::is_regular_file(side)) m[side.generic_string()] = sha256_file(side);
    }
  }

  // Latest run at manifest.json; every run also kept under manifests/<id>.json.
  void write_manifest() const {
    manifest_.write(out_dir_ / "manifest.json");
    manifest_.write(out_dir_ / "manifests" / (id() + ".json"));
  }

  ProjectConfig cfg_;
  fs::path out_dir_;
  RunManifest manifest_;
  StageRecord* current_ = nullptr;
};

// ---------------------------------------------------------------------------
// Stage bodies shared by the subcommands and the pipeline.

std::vector<fs::path> do_generate(Run& run, const std::vector<Direction>& dirs, const std::vector<double>& sps,
                                  Frame frame, const fs::path& single_out) {
  const auto& cfg = run.cfg();
  if (!single_out.empty() && dirs.size() * sps.size() != 1)
    throw InvalidArgument("--out names one file; give exactly one direction and one sparsity");
  std::vector<fs::path> files;
  for (Direction d : dirs) {
    for (double s : sps) {
      Trajectory t = generate_base_zigzag(s, cfg.trajectory.step);
      if (frame != Frame::Centered) t = rotate_to_direction(t, d);
      if (frame == Frame::Joint) t = scale_to_limits(t, cfg.limits);
      const fs::path p = run.out(single_out.empty()
                                     ? fs::path("trajectories") / (to_string(d) + "_" + slug(format_sparsity(s)) + ".csv")
                                     : single_out);
      nlohmann::json extra{{"manifest_id", run.id()}, {"levels", raster_levels(s)}};
      if (frame == Frame::Joint) extra["duration_s"] = trajectory_duration(t, cfg.trajectory.speeds);
      write_trajectory(t, p, cfg.limits, extra);
      files.push_back(p);
    }
  }
  std::cerr << " " << files.size() << " trajector" << (files.size() == 1 ? "y" : "ies");
  return files;
}

struct RecordOpts {
  std::vector<fs::path> trajectories;  // empty: the configured direction and sparsities
  int hours = 0;                       // 0: calibration + test run
  double load_g = 0.0;
  bool idle = false;
  AuxMode aux = AuxMode::Catalog;
};

fs::path do_record(Run& run, const RecordOpts& o, std::uint64_t seed, const fs::path& out) {
  ProjectConfig cfg = run.cfg();
  std::vector<Trajectory> trajs;
  for (const auto& p : o.trajectories) trajs.push_back(read_trajectory(p));
  if (trajs.empty()) trajs = calibration_trajectories(cfg, cfg.trajectory.direction, cfg.trajectory.sparsities);

  RecordedBag bag;
  nlohmann::json extra;
  if (o.hours == 0) {
    bag = record_plan(cfg, calibration_plan(cfg, trajs, seed, cfg.trajectory.test_duration_s), seed, o.aux);
    extra["scenario"] = "calibration";
  } else {
    cfg.eval.hours = o.hours;
    cfg.eval.load_g = o.load_g;
    const DriftCondition c = o.idle ? DriftCondition::Idle
                                    : (o.load_g > 0.0 ? DriftCondition::Loaded : DriftCondition::Unloaded);
    DriftSession ds = record_drift_session(cfg, seed, c, trajs);
    bag = std::move(ds.bag);
    extra = {{"scenario", to_string(c)},
             {"hours", o.hours},
             {"load_g", o.load_g},
             {"drift_origin_s", ds.origin},
             {"seconds_per_hour", ds.seconds_per_hour}};
  }
  nlohmann::json tj = nlohmann::json::array();
  for (const auto& t : trajs) tj.push_back({{"direction", to_string(t.direction)}, {"sparsity", format_sparsity(t.sparsity)}});
  extra["trajectories"] = tj;
  for (auto it = extra.begin(); it != extra.end(); ++it) bag.meta[it.key()] = it.value();
  bag.meta["manifest_id"] = run.id();
  bag.meta["config_hash"] = config_hash(cfg);
  run.add_simulated(bag.meta.value("session_duration_s", 0.0));
  const fs::path dir = run.out(out);
  write_bag(bag, dir);
  std::cerr << " " << bag.state_count() << " states, " << bag.truth_count() << " truth samples";
  return dir;
}

fs::path do_process(Run& run, const fs::path& bag_dir, FeatureSet set, const fs::path& out) {
  const RecordedBag bag = read_bag(bag_dir);
  Dataset d = synchronize(bag, run.cfg().trajectory.sync_tolerance, set);
  d.manifest_id = run.id();
  const fs::path p = run.out(out);
  write_dataset(d, p);
  std::cerr << " " << d.rows() << " pairs from " << bag.state_count() << " states";
  return p;
}

std::vector<fs::path> do_train(Run& run, const fs::path& data, const std::vector<ModelKind>& kinds,
                               std::uint64_t seed, const fs::path& single_out, const fs::path& dir) {
  if (!single_out.empty() && kinds.size() != 1) throw InvalidArgument("--out names one file; give exactly one --model");
  const Dataset train = training_rows(read_dataset(data));
  std::vector<fs::path> out;
  for (ModelKind k : kinds) {
    const auto m = fit_model(k, train, run.cfg(), seed);
    const fs::path p = run.out(single_out.empty() ? dir / (to_string(k) + kModelExt) : single_out);
    save_model(*m, p, run.cfg().training.format, run.id());
    for (const auto& w : m->fit_info().warnings) std::cerr << "\n  " << to_string(k) << ": " << w;
    out.push_back(p);
  }
  std::cerr << " " << train.rows() << " rows";
  return out;
}

std::vector<std::unique_ptr<CalibrationModel>> load_models(const std::vector<fs::path>& paths) {
  std::vector<std::unique_ptr<CalibrationModel>> ms;
  for (const auto& p : paths) ms.push_back(load_model(p));
  return ms;
}

nlohmann::json reports_json(const std::vector<RmseReport>& reps, const std::string& manifest_id) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : reps) a.push_back(to_json(r));
  return {{"manifest_id", manifest_id}, {"reports", a}};
}

/// Plot-ready long format: one row per (sample, joint, series).
void write_plot_data(const Dataset& test, const std::vector<std::unique_ptr<CalibrationModel>>& models,
                     const fs::path& p) {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> series{{"truth", test.truth}, {"reported", test.reported}};
  for (const auto& m : models) series.emplace_back(to_string(m->kind()), m->predict(test));
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write " + p.string());
  out << "t,joint,series,value\n";
  for (Eigen::Index r = 0; r < test.time.size(); ++r)
    for (int j = 0; j < 3; ++j)
      for (const auto& [name, v] : series)
        out << format_double(test.time[r]) << ",j" << j + 1 << ',' << name << ',' << format_double(v(r, j)) << '\n';
}

std::vector<RmseReport> do_evaluate(Run& run, const std::vector<fs::path>& model_paths, const fs::path& offset_path,
                                    const fs::path& data, int hours, bool plot, const fs::path& dir) {
  if (model_paths.empty()) throw InvalidArgument("no model files given or found");
  const Dataset all = read_dataset(data);
  const Dataset test = test_rows(all);
  const auto models = load_models(model_paths);
  std::unique_ptr<CalibrationModel> offset_owned;
  const FixedOffsetModel* offset = nullptr;
  if (!offset_path.empty()) {
    offset_owned = load_model(offset_path);
    offset = dynamic_cast<const FixedOffsetModel*>(offset_owned.get());
    if (!offset) throw InvalidArgument(offset_path.string() + " is not a fixed-offset model");
  } else {
    for (const auto& m : models)
      if (auto* fo = dynamic_cast<const FixedOffsetModel*>(m.get())) offset = fo;
  }
  if (!offset) throw InvalidArgument("evaluation needs a fixed-offset baseline (--offset or an offset model)");

  std::vector<RmseReport> reports;
  for (const auto& m : models) reports.push_back(evaluate(*m, *offset, test, to_string(m->kind())));
  write_json(reports_json(reports, run.id()), run.out(dir / "eval.json"));
  write_reports_csv(reports, run.out(dir / "eval.csv"));

  if (hours > 0) {
    // Hour 0 starts where the training recording ends.
    double origin = 0.0;
    for (const auto& s : all.sources)
      if (s.segment.label == kTrainLabel) origin = std::max(origin, s.segment.end);
    const DecayOptions opt{origin, hours, 3600.0 / run.cfg().trajectory.time_scale};
    std::vector<RmseReport> decay;
    for (const auto& m : models)
      for (auto r : decay_curve(*m, *offset, test, opt)) {
        r.label = to_string(m->kind());
        decay.push_back(r);
      }
    write_json(reports_json(decay, run.id()), run.out(dir / "decay.json"));
    write_reports_csv(decay, run.out(dir / "decay.csv"));
  }
  if (plot) write_plot_data(test, models, run.out(dir / "plot_predictions.csv"));
  return reports;
}

std::vector<LatencyReport> do_bench(Run& run, const std::vector<fs::path>& model_paths, const fs::path& data,
                                    const fs::path& out) {
  if (model_paths.empty()) throw InvalidArgument("no model files given or found");
  const Dataset inputs = test_rows(read_dataset(data));
  const auto models = load_models(model_paths);
  const auto& ec = run.cfg().eval;
  std::vector<LatencyReport> reps;
  nlohmann::json a = nlohmann::json::array();
  for (const auto& m : models) {
    reps.push_back(bench_latency(*m, inputs, ec.latency_samples, ec.latency_runs, ec.budget_hz, to_string(m->kind())));
    a.push_back(to_json(reps.back()));
  }
  write_json({{"manifest_id", run.id()}, {"latency", a}}, run.out(out));
  return reps;
}

void print_reports(const std::vector<RmseReport>& reps) {
  std::printf("%-28s %8s %8s %8s | %8s %8s %8s | %6s %6s %6s\n", "model", "j1", "j2", "j3", "fo j1", "fo j2",
              "fo j3", "%j1", "%j2", "%j3");
  for (const auto& r : reps) {
    std::string label = r.label;
    if (r.hour >= 0) label += " h" + std::to_string(r.hour);
    if (!r.present) {
      std::printf("%-28s (no samples)\n", label.c_str());
      continue;
    }
    std::printf("%-28s %8.4f %8.4f %8.4f | %8.4f %8.4f %8.4f | %6.1f %6.1f %6.1f\n", label.c_str(), r.model[0],
                r.model[1], r.model[2], r.fixed_offset[0], r.fixed_offset[1], r.fixed_offset[2], r.percentage[0],
                r.percentage[1], r.percentage[2]);
  }
  if (!reps.empty() && reps.front().present)
    std::printf("%-28s %8.4f %8.4f %8.4f\n", "raw", reps.front().raw[0], reps.front().raw[1], reps.front().raw[2]);
}

void print_latency(const std::vector<LatencyReport>& reps) {
  std::printf("%-10s %10s %10s %10s %12s %6s %8s\n", "model", "p50 us", "p95 us", "p99 us", "samples/s", "pass",
              "spread");
  for (const auto& r : reps)
    std::printf("%-10s %10.3f %10.3f %10.3f %12.0f %6s %8.3f\n", r.label.c_str(), r.p50 * 1e6, r.p95 * 1e6,
                r.p99 * 1e6, r.throughput_hz, r.pass ? "yes" : "no", r.p99_spread);
}

std::vector<fs::path> models_in(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == kModelExt) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint64_t> seeds_of(const ProjectConfig& cfg) {
  std::vector<std::uint64_t> s(cfg.repeats);
  std::iota(s.begin(), s.end(), cfg.seed);
  return s;
}

/// Mean over seeds of reports that share a label (and hour).
std::vector<RmseReport> average_over_seeds(const std::vector<std::vector<RmseReport>>& per_seed) {
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, std::vector<RmseReport>> groups;
  for (const auto& reps : per_seed)
    for (const auto& r : reps) {
      const auto key = std::make_pair(r.label, r.hour);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(r);
    }
  std::vector<RmseReport> out;
  for (const auto& key : order) {
    RmseReport m = mean_report(groups[key], key.first);
    m.hour = key.second;
    out.push_back(m);
  }
  return out;
}

std::vector<Direction> parse_directions(const std::vector<std::string>& names, std::vector<Direction> fallback) {
  if (names.empty()) return fallback;
  std::vector<Direction> out;
  for (const auto& n : names) {
    if (n == "all") return {kAllDirections.begin(), kAllDirections.end()};
    out.push_back(parse_direction(n));
  }
  return out;
}

std::vector<ModelKind> parse_kinds(const std::vector<std::string>& names, const std::vector<ModelKind>& fallback) {
  if (names.empty()) return fallback;
  std::vector<ModelKind> out;
  for (const auto& n : names) out.push_back(parse_model_kind(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated calibration of cable-driven robot joints"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  Globals g;
  app.add_option("-c,--config", g.config_path, "TOML or JSON configuration file");
  auto* seed_opt = app.add_option("--seed", g.seed, "Base seed (overrides the config)");
  app.add_option("-o,--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--repeats", g.repeats, "Seeds seed..seed+k-1; reported RMSE is averaged")->check(CLI::PositiveNumber);
  app.add_option("--time-scale", g.time_scale, "Simulated drift hours per session hour")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Model file encoding")->check(CLI::IsMember({"json", "cbor"}));
  app.add_flag("--emit-plot-data", g.emit_plot_data, "Also write long-format per-sample CSVs");

  auto* gen = app.add_subcommand("generate", "Write zig-zag calibration trajectories");
  std::vector<std::string> gen_dirs, gen_sparsities;
  std::string gen_frame = "joint", gen_out;
  gen->add_option("-d,--direction", gen_dirs, "Direction(s), or 'all' (default: config)");
  gen->add_option("-s,--sparsity", gen_sparsities, "Sparsities such as 1/4 (default: config)");
  gen->add_option("--frame", gen_frame, "centered, unit or joint")->check(CLI::IsMember({"centered", "unit", "joint"}));
  gen->add_option("--out", gen_out, "Output file (single trajectory only)");

  auto* rec = app.add_subcommand("record", "Simulate a recording session into a bag directory");
  std::vector<std::string> rec_trajs;
  int rec_hours = 0;
  std::string rec_load = "0", rec_aux = "catalog", rec_out;
  double rec_test_s = 0.0;
  bool rec_idle = false;
  rec->add_option("--traj", rec_trajs, "Training trajectory files (default: config direction and sparsities)");
  rec->add_option("--hours", rec_hours, "Operate for this many hours after training, one test window per hour")
      ->check(CLI::NonNegativeNumber);
  rec->add_option("--load", rec_load, "Payload during operation, e.g. 500g");
  rec->add_flag("--idle", rec_idle, "Hold still between test windows instead of operating");
  rec->add_option("--test-duration", rec_test_s, "Test run length in seconds (calibration sessions)");
  rec->add_option("--aux", rec_aux, "Auxiliary feature block")->check(CLI::IsMember({"catalog", "noise"}));
  rec->add_option("--out", rec_out, "Bag directory (default: <out-dir>/bag)");

  auto* proc = app.add_subcommand("process", "Synchronize a bag into a dataset CSV");
  std::string proc_bag, proc_out, proc_features;
  proc->add_option("--bag", proc_bag, "Bag directory (default: <out-dir>/bag)");
  proc->add_option("--out", proc_out, "Dataset CSV (default: <out-dir>/data/dataset.csv)");
  proc->add_option("--features", proc_features, "selected or full")->check(CLI::IsMember({"selected", "full"}));

  auto* trn = app.add_subcommand("train", "Fit calibration models");
  std::string trn_data, trn_mode, trn_out;
  std::vector<std::string> trn_kinds;
  trn->add_option("--model", trn_kinds, "offset, linear, poly2 or mlp (default: config)");
  trn->add_option("--mode", trn_mode, "on-error or e2e");
  trn->add_option("--data", trn_data, "Dataset CSV (default: <out-dir>/data/dataset.csv)");
  trn->add_option("--out", trn_out, "Model file (single model only; default: <out-dir>/models/<kind>.ccm)");

  auto* evl = app.add_subcommand("evaluate", "Test RMSE against the raw and fixed-offset baselines");
  std::string evl_data, evl_offset;
  std::vector<std::string> evl_models;
  int evl_hours = 0;
  evl->add_option("--model", evl_models, "Model files (default: <out-dir>/models/*.ccm)");
  evl->add_option("--data", evl_data, "Dataset CSV (default: <out-dir>/data/dataset.csv)");
  evl->add_option("--offset", evl_offset, "Fixed-offset model used as the baseline");
  evl->add_option("--hours", evl_hours, "Also report hourly decay over this many hours")->check(CLI::NonNegativeNumber);

  auto* bch = app.add_subcommand("bench", "Batch-1 inference latency against the servo budget");
  std::string bch_data;
  std::vector<std::string> bch_models;
  bch->add_option("--model", bch_models, "Model files (default: <out-dir>/models/*.ccm)");
  bch->add_option("--data", bch_data, "Dataset CSV providing inputs (default: <out-dir>/data/dataset.csv)");

  auto* swp = app.add_subcommand("sweep", "Run an experiment study for every seed");
  std::string swp_study = "directions";
  std::vector<std::string> swp_dirs, swp_kinds, swp_conditions;
  swp->add_option("study", swp_study, "directions, features, drift or homing")
      ->check(CLI::IsMember({"directions", "features", "drift", "homing"}));
  swp->add_option("-d,--direction", swp_dirs, "Directions (default: all)");
  swp->add_option("--model", swp_kinds, "Model kinds");
  swp->add_option("--condition", swp_conditions, "Drift conditions (default: loaded unloaded idle)");

  auto* pipe = app.add_subcommand("pipeline", "generate, record, process, train, evaluate and bench");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  ProjectConfig cfg;
  std::vector<Direction> gen_d, swp_d;
  std::vector<double> gen_s;
  std::vector<ModelKind> trn_k, swp_k;
  std::vector<DriftCondition> swp_c;
  double load_g = 0.0;
  try {
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    if (seed_opt->count()) cfg.seed = g.seed;
    if (g.repeats) cfg.repeats = g.repeats;
    if (g.time_scale > 0.0) cfg.trajectory.time_scale = g.time_scale;
    if (!g.format.empty()) cfg.training.format = parse_model_format(g.format);
    if (!trn_mode.empty()) cfg.training.mode = parse_output_mode(trn_mode);
    if (!proc_features.empty()) cfg.training.features = parse_feature_set(proc_features);
    if (rec_test_s > 0.0) cfg.trajectory.test_duration_s = rec_test_s;
    cfg.validate();

    gen_d = parse_directions(gen_dirs, {cfg.trajectory.direction});
    for (const auto& s : gen_sparsities) gen_s.push_back(parse_sparsity(s));
    if (gen_s.empty()) gen_s = cfg.trajectory.sparsities;
    load_g = parse_load(rec_load);
    trn_k = parse_kinds(trn_kinds, cfg.training.models);
    swp_d = parse_directions(swp_dirs, {kAllDirections.begin(), kAllDirections.end()});
    swp_k = parse_kinds(swp_kinds, swp_study == "homing" ? std::vector<ModelKind>{ModelKind::Linear}
                                                         : cfg.training.models);
    for (const auto& c : swp_conditions) swp_c.push_back(parse_drift_condition(c));
    if (swp_c.empty()) swp_c = {DriftCondition::Loaded, DriftCondition::Unloaded, DriftCondition::Idle};
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const fs::path out = g.out_dir;
  const fs::path default_data = out / "data" / "dataset.csv";
  std::string command;
  for (int i = 1; i < argc; ++i) command += (i > 1 ? " " : "") + std::string(argv[i]);

  try {
    if (*gen) {
      Run run(cfg, g, command, {});
      run.stage("generate", [&] { do_generate(run, gen_d, gen_s, parse_frame(gen_frame), user_path(gen_out)); });
      run.finish();
    } else if (*rec) {
      RecordOpts o;
      o.trajectories.assign(rec_trajs.begin(), rec_trajs.end());
      o.hours = rec_hours;
      o.load_g = load_g;
      o.idle = rec_idle;
      o.aux = rec_aux == "noise" ? AuxMode::Noise : AuxMode::Catalog;
      Run run(cfg, g, command, o.trajectories);
      run.stage("record", [&] { do_record(run, o, cfg.seed, rec_out.empty() ? fs::path("bag") : user_path(rec_out)); });
      run.finish();
    } else if (*proc) {
      const fs::path bag = proc_bag.empty() ? out / "bag" : fs::path(proc_bag);
      Run run(cfg, g, command, {bag});
      run.stage("process", [&] {
        do_process(run, bag, cfg.training.features, proc_out.empty() ? fs::path("data") / "dataset.csv" : user_path(proc_out));
      });
      run.finish();
    } else if (*trn) {
      const fs::path data = trn_data.empty() ? default_data : fs::path(trn_data);
      Run run(cfg, g, command, {data});
      run.stage("train", [&] { do_train(run, data, trn_k, cfg.seed, user_path(trn_out), "models"); });
      run.finish();
    } else if (*evl) {
      const fs::path data = evl_data.empty() ? default_data : fs::path(evl_data);
      std::vector<fs::path> models(evl_models.begin(), evl_models.end());
      if (models.empty()) models = models_in(out / "models");
      std::vector<fs::path> inputs = models;
      inputs.push_back(data);
      if (!evl_offset.empty()) inputs.push_back(evl_offset);
      Run run(cfg, g, command, inputs);
      std::vector<RmseReport> reps;
      run.stage("evaluate",
                [&] { reps = do_evaluate(run, models, evl_offset, data, evl_hours, g.emit_plot_data, "reports"); });
      run.finish();
      print_reports(reps);
    } else if (*bch) {
      const fs::path data = bch_data.empty() ? default_data : fs::path(bch_data);
      std::vector<fs::path> models(bch_models.begin(), bch_models.end());
      if (models.empty()) models = models_in(out / "models");
      std::vector<fs::path> inputs = models;
      inputs.push_back(data);
      Run run(cfg, g, command, inputs);
      std::vector<LatencyReport> reps;
      run.stage("bench", [&] { reps = do_bench(run, models, data, "reports/latency.json"); });
      run.finish();
      print_latency(reps);
    } else if (*swp) {
      Run run(cfg, g, command, {});
      nlohmann::json per_seed = nlohmann::json::array();
      std::vector<std::vector<RmseReport>> flat;
      for (std::uint64_t seed : seeds_of(cfg)) {
        run.stage(swp_study + " (seed " + std::to_string(seed) + ")", [&] {
          nlohmann::json entry{{"seed", seed}};
          std::vector<RmseReport> reps;
          if (swp_study == "directions") {
            const auto rows = direction_sweep(cfg, seed, swp_d, swp_k);
            entry["rows"] = to_json(rows);
            for (const auto& row : rows)
              for (auto r : row.reports) {
                r.label = to_string(row.direction) + "/" + r.label;
                reps.push_back(r);
              }
          } else if (swp_study == "features") {
            reps = feature_robustness(cfg, seed);
            entry["reports"] = reports_json(reps, run.id())["reports"];
          } else if (swp_study == "drift") {
            nlohmann::json a = nlohmann::json::array();
            for (DriftCondition c : swp_c) {
              const auto res = drift_study(cfg, seed, c, swp_k);
              a.push_back(to_json(res));
              for (const auto& cv : res.curves)
                for (auto r : cv.hours) {
                  r.label = to_string(c) + "/" + cv.model;
                  reps.push_back(r);
                }
            }
            entry["conditions"] = a;
          } else {
            nlohmann::json a = nlohmann::json::array();
            for (ModelKind k : swp_k) {
              const auto res = homing_study(cfg, seed, k);
              a.push_back(to_json(res));
              for (auto r : res.single) {
                r.label = to_string(k) + "/single/" + r.label;
                reps.push_back(r);
              }
              for (auto r : res.incremental) {
                r.label = to_string(k) + "/incremental/" + r.label;
                reps.push_back(r);
              }
            }
            entry["studies"] = a;
          }
          per_seed.push_back(entry);
          flat.push_back(std::move(reps));
        });
      }
      const auto mean = average_over_seeds(flat);
      run.stage("write", [&] {
        nlohmann::json j = reports_json(mean, run.id());
        j["study"] = swp_study;
        j["seeds"] = seeds_of(cfg);
        j["per_seed"] = per_seed;
        write_json(j, run.out("sweeps/" + swp_study + ".json"));
        write_reports_csv(mean, run.out("sweeps/" + swp_study + ".csv"));
      });
      run.finish();
      print_reports(mean);
    } else if (*pipe) {
      if (std::find(cfg.training.models.begin(), cfg.training.models.end(), ModelKind::Offset) ==
          cfg.training.models.end())
        cfg.training.models.insert(cfg.training.models.begin(), ModelKind::Offset);
      Run run(cfg, g, command, {});
      const bool multi = cfg.repeats > 1;
      std::vector<fs::path> trajs;
      run.stage("generate",
                [&] { trajs = do_generate(run, {cfg.trajectory.direction}, cfg.trajectory.sparsities, Frame::Joint, {}); });
      std::vector<std::vector<RmseReport>> all;
      for (std::uint64_t seed : seeds_of(cfg)) {
        const fs::path base = multi ? fs::path("seed-" + std::to_string(seed)) : fs::path();
        const std::string tag = multi ? " (seed " + std::to_string(seed) + ")" : "";
        fs::path bag, data;
        std::vector<fs::path> models;
        std::vector<RmseReport> reps;
        std::vector<LatencyReport> lat;
        RecordOpts o;
        o.trajectories = trajs;
        run.stage("record" + tag, [&] { bag = do_record(run, o, seed, base / "bag"); });
        run.stage("process" + tag,
                  [&] { data = do_process(run, bag, cfg.training.features, base / "data" / "dataset.csv"); });
        run.stage("train" + tag, [&] { models = do_train(run, data, cfg.training.models, seed, {}, base / "models"); });
        run.stage("evaluate" + tag,
                  [&] { reps = do_evaluate(run, models, {}, data, 0, g.emit_plot_data, base / "reports"); });
        run.stage("bench" + tag, [&] { lat = do_bench(run, models, data, base / "reports" / "latency.json"); });
        if (multi) std::printf("seed %llu\n", static_cast<unsigned long long>(seed));
        print_reports(reps);
        print_latency(lat);
        all.push_back(std::move(reps));
      }
      const auto mean = average_over_seeds(all);
      run.stage("summary", [&] {
        write_json(reports_json(mean, run.id()), run.out("reports/summary.json"));
        write_reports_csv(mean, run.out("reports/summary.csv"));
      });
      run.finish();
      if (multi) {
        std::printf("mean over %zu seeds\n", all.size());
        print_reports(mean);
      }
    }
  } catch (const StageFailed& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
