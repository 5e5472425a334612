#include "cablecal/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cablecal {

namespace fs = std::filesystem;

namespace {

constexpr int kFileVersion = 1;

// Minimal CSV reader for the files written below: no quoting, comma separated.
class CsvReader {
 public:
  explicit CsvReader(const fs::path& p) : path_(p), in_(p) {
    if (!in_) throw FormatError("cannot open " + p.string());
  }

  bool next(std::vector<std::string_view>& fields) {
    if (!std::getline(in_, line_)) return false;
    ++line_no_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    fields.clear();
    std::string_view s(line_);
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      fields.push_back(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

  double number(std::string_view f) const {
    try {
      return parse_double(f);
    } catch (const FormatError& e) {
      fail(e.what());
    }
  }

 private:
  fs::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  return out;
}

void write_json_file(const fs::path& p, const nlohmann::json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

nlohmann::json segment_json(const Segment& s) {
  return {{"label", s.label},       {"begin", s.begin}, {"end", s.end},
          {"homing_count", s.homing_count}, {"load_g", s.load_g}, {"idle", s.idle}};
}

Segment segment_from_json(const nlohmann::json& j) {
  Segment s;
  s.label = j.at("label").get<std::string>();
  s.begin = j.at("begin").get<double>();
  s.end = j.at("end").get<double>();
  s.homing_count = j.value("homing_count", 0);
  s.load_g = j.value("load_g", 0.0);
  s.idle = j.value("idle", false);
  return s;
}

std::vector<std::size_t> input_columns(const FeatureSchema& schema, FeatureSet set) {
  if (set == FeatureSet::Selected) return schema.selected_indices();
  std::vector<std::size_t> all(schema.dim_full());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

template <class Matrix>
Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Dataset select_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out = d;
  out.time = take_rows(d.time, rows);
  out.inputs = take_rows(d.inputs, rows);
  out.truth = take_rows(d.truth, rows);
  out.reported = take_rows(d.reported, rows);
  out.sources.clear();
  // rows is increasing, so each source maps onto a contiguous range.
  for (const auto& s : d.sources) {
    const auto b = static_cast<std::size_t>(std::lower_bound(rows.begin(), rows.end(), s.row_begin) - rows.begin());
    const auto e = static_cast<std::size_t>(std::lower_bound(rows.begin(), rows.end(), s.row_end) - rows.begin());
    if (e > b) out.sources.push_back({s.segment, b, e});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void RecordedBag::validate() const {
  if (state_features.rows() != static_cast<Eigen::Index>(state_time.size()) || reported.size() != state_time.size())
    throw FormatError("bag: state stream columns have different lengths");
  if (static_cast<std::size_t>(state_features.cols()) != schema.dim_full() && !state_time.empty())
    throw FormatError("bag: state width " + std::to_string(state_features.cols()) + " != schema width " +
                      std::to_string(schema.dim_full()));
  if (truth.size() != truth_time.size()) throw FormatError("bag: truth stream columns have different lengths");
  if (!std::is_sorted(state_time.begin(), state_time.end()) ||
      std::adjacent_find(state_time.begin(), state_time.end()) != state_time.end())
    throw FormatError("bag: state timestamps not strictly increasing");
  if (!std::is_sorted(truth_time.begin(), truth_time.end()) ||
      std::adjacent_find(truth_time.begin(), truth_time.end()) != truth_time.end())
    throw FormatError("bag: truth timestamps not strictly increasing");
}

void RecordedBag::append(const RecordedBag& later) {
  if (later.schema != schema) throw SchemaMismatch("bag append: schemas differ");
  if (!state_time.empty() && !later.state_time.empty() && later.state_time.front() <= state_time.back())
    throw FormatError("bag append: state chunk overlaps in time");
  if (!truth_time.empty() && !later.truth_time.empty() && later.truth_time.front() <= truth_time.back())
    throw FormatError("bag append: truth chunk overlaps in time");
  const Eigen::Index n0 = state_features.rows();
  Eigen::MatrixXd merged(n0 + later.state_features.rows(), static_cast<Eigen::Index>(schema.dim_full()));
  if (n0 > 0) merged.topRows(n0) = state_features;
  if (later.state_features.rows() > 0) merged.bottomRows(later.state_features.rows()) = later.state_features;
  state_features = std::move(merged);
  state_time.insert(state_time.end(), later.state_time.begin(), later.state_time.end());
  reported.insert(reported.end(), later.reported.begin(), later.reported.end());
  truth_time.insert(truth_time.end(), later.truth_time.begin(), later.truth_time.end());
  truth.insert(truth.end(), later.truth.begin(), later.truth.end());
  for (const auto& s : later.segments)
    if (std::find(segments.begin(), segments.end(), s) == segments.end()) segments.push_back(s);
}

RecordedBag make_bag(const SessionResult& session, const FeatureSchema& schema, nlohmann::json meta) {
  RecordedBag bag;
  bag.schema = schema;
  const auto n = static_cast<Eigen::Index>(session.states.size());
  bag.state_features.resize(n, static_cast<Eigen::Index>(schema.dim_full()));
  bag.state_time.reserve(session.states.size());
  bag.reported.reserve(session.states.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = session.states[static_cast<std::size_t>(i)];
    if (s.features.size() != schema.dim_full())
      throw SchemaMismatch("state vector width does not match the feature schema");
    bag.state_time.push_back(s.timestamp);
    bag.reported.push_back(s.reported);
    bag.state_features.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.features.data(), static_cast<Eigen::Index>(s.features.size()));
  }
  for (const auto& t : session.truth) {
    bag.truth_time.push_back(t.timestamp);
    bag.truth.push_back(t.position);
  }
  for (const auto& s : session.spans) bag.segments.push_back({s.label, s.begin, s.end, s.homing_count, s.load_g, s.idle});
  bag.meta = std::move(meta);
  if (!bag.meta.is_object()) bag.meta = nlohmann::json::object();
  bag.meta["session_duration_s"] = session.duration;
  bag.validate();
  return bag;
}

void write_bag(const RecordedBag& bag, const fs::path& dir) {
  bag.validate();
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "state.csv");
    out << "t,rep_1,rep_2,rep_3";
    for (const auto& n : bag.schema.names()) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < bag.state_count(); ++i) {
      out << format_double(bag.state_time[i]);
      for (std::size_t j = 0; j < kNumJoints; ++j) out << ',' << format_double(bag.reported[i][j]);
      for (Eigen::Index c = 0; c < bag.state_features.cols(); ++c)
        out << ',' << format_double(bag.state_features(static_cast<Eigen::Index>(i), c));
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "truth.csv");
    out << "t,q1,q2,q3\n";
    for (std::size_t i = 0; i < bag.truth_count(); ++i) {
      out << format_double(bag.truth_time[i]);
      for (std::size_t j = 0; j < kNumJoints; ++j) out << ',' << format_double(bag.truth[i][j]);
      out << '\n';
    }
  }
  nlohmann::json meta;
  meta["version"] = kFileVersion;
  meta["schema"] = bag.schema;
  meta["state_count"] = bag.state_count();
  meta["truth_count"] = bag.truth_count();
  meta["segments"] = nlohmann::json::array();
  for (const auto& s : bag.segments) meta["segments"].push_back(segment_json(s));
  meta["meta"] = bag.meta;
  write_json_file(dir / "meta.json", meta);
}

RecordedBag read_bag(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("bag directory not found: " + dir.string());
  const auto meta = read_json_file(dir / "meta.json");
  if (meta.value("version", 0) != kFileVersion) throw FormatError("bag: unsupported version");
  RecordedBag bag;
  bag.schema = meta.at("schema").get<FeatureSchema>();
  for (const auto& s : meta.at("segments")) bag.segments.push_back(segment_from_json(s));
  bag.meta = meta.value("meta", nlohmann::json::object());

  const std::size_t width = bag.schema.dim_full();
  std::vector<std::string_view> f;
  {
    CsvReader csv(dir / "state.csv");
    if (!csv.next(f)) csv.fail("missing header");
    if (f.size() != 4 + width) csv.fail("header width does not match schema");
    for (std::size_t i = 0; i < width; ++i)
      if (f[4 + i] != bag.schema.names()[i]) csv.fail("column '" + std::string(f[4 + i]) + "' does not match schema");
    std::vector<double> values;
    while (csv.next(f)) {
      if (f.size() != 4 + width) csv.fail("wrong field count");
      bag.state_time.push_back(csv.number(f[0]));
      bag.reported.push_back({csv.number(f[1]), csv.number(f[2]), csv.number(f[3])});
      for (std::size_t i = 0; i < width; ++i) values.push_back(csv.number(f[4 + i]));
    }
    bag.state_features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Eigen::Index>(bag.state_time.size()), static_cast<Eigen::Index>(width));
  }
  {
    CsvReader csv(dir / "truth.csv");
    if (!csv.next(f)) csv.fail("missing header");
    while (csv.next(f)) {
      if (f.size() != 4) csv.fail("wrong field count");
      bag.truth_time.push_back(csv.number(f[0]));
      bag.truth.push_back({csv.number(f[1]), csv.number(f[2]), csv.number(f[3])});
    }
  }
  bag.validate();
  return bag;
}

// ---------------------------------------------------------------------------

NormStats NormStats::fit(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw EmptyDatasetError("normalization statistics of an empty matrix");
  NormStats s;
  const auto d = x.cols();
  s.mean.resize(d);
  s.sd.resize(d);
  s.constant.assign(static_cast<std::size_t>(d), false);
  for (Eigen::Index c = 0; c < d; ++c) {
    const auto col = x.col(c);
    if (col.maxCoeff() == col.minCoeff()) {
      s.mean[c] = col[0];
      s.sd[c] = 1.0;
      s.constant[static_cast<std::size_t>(c)] = true;
      continue;
    }
    const double m = col.mean();
    s.mean[c] = m;
    s.sd[c] = std::sqrt((col.array() - m).square().mean());
  }
  return s;
}

Eigen::MatrixXd NormStats::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw SchemaMismatch("normalization width does not match the data");
  return (x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

std::size_t NormStats::constant_count() const {
  return static_cast<std::size_t>(std::count(constant.begin(), constant.end(), true));
}

nlohmann::json to_json(const NormStats& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"sd", std::vector<double>(s.sd.data(), s.sd.data() + s.sd.size())},
          {"constant", s.constant}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("sd").get<std::vector<double>>();
  s.constant = j.at("constant").get<std::vector<bool>>();
  if (m.size() != sd.size() || m.size() != s.constant.size()) throw FormatError("normalization stats: length mismatch");
  s.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.sd = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

// ---------------------------------------------------------------------------

std::vector<std::string> Dataset::input_names() const {
  std::vector<std::string> names;
  for (auto i : input_columns(schema, feature_set)) names.push_back(schema.names()[i]);
  return names;
}

Dataset Dataset::rows_range(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw InvalidArgument("row range out of bounds");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return select_rows(*this, idx);
}

Dataset Dataset::time_window(double begin, double end) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows(); ++i)
    if (time[static_cast<Eigen::Index>(i)] >= begin && time[static_cast<Eigen::Index>(i)] < end) idx.push_back(i);
  return select_rows(*this, idx);
}

Dataset Dataset::with_label(const std::string& label) const {
  std::vector<std::size_t> idx;
  for (const auto& s : sources)
    if (s.segment.label == label)
      for (std::size_t i = s.row_begin; i < s.row_end; ++i) idx.push_back(i);
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return select_rows(*this, idx);
}

void Dataset::validate() const {
  const auto n = inputs.rows();
  if (time.size() != n || truth.rows() != n || reported.rows() != n)
    throw FormatError("dataset: columns have different row counts");
  if (truth.cols() != 3 || reported.cols() != 3) throw FormatError("dataset: targets must have 3 columns");
  if (static_cast<std::size_t>(inputs.cols()) != input_columns(schema, feature_set).size())
    throw SchemaMismatch("dataset: input width does not match schema and feature set");
  for (const auto& s : sources)
    if (s.row_begin > s.row_end || s.row_end > static_cast<std::size_t>(n))
      throw FormatError("dataset: source row range out of bounds");
}

Dataset synchronize(const RecordedBag& bag, double tolerance, FeatureSet set) {
  if (!(tolerance >= 0.0)) throw InvalidArgument("sync tolerance must be >= 0");
  if (bag.state_count() == 0 || bag.truth_count() == 0)
    throw PreconditionError("synchronize needs non-empty state and truth streams");
  bag.validate();

  const auto& tt = bag.truth_time;
  const std::size_t ns = bag.state_count();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> claim(ns, kNone);
  std::vector<std::size_t> owner(tt.size(), kNone);
  auto gap = [&](std::size_t s, std::size_t t) { return std::abs(bag.state_time[s] - tt[t]); };

  for (std::size_t i = 0; i < ns; ++i) {
    const double t = bag.state_time[i];
    const auto it = std::lower_bound(tt.begin(), tt.end(), t);
    std::size_t best = kNone;
    if (it != tt.end()) best = static_cast<std::size_t>(it - tt.begin());
    if (it != tt.begin()) {
      const std::size_t prev = static_cast<std::size_t>(it - tt.begin()) - 1;
      if (best == kNone || gap(i, prev) <= gap(i, best)) best = prev;
    }
    if (best == kNone || gap(i, best) > tolerance) continue;
    // One truth sample per state sample: the nearest state wins, earlier on ties.
    if (owner[best] == kNone || gap(i, best) < gap(owner[best], best)) {
      if (owner[best] != kNone) claim[owner[best]] = kNone;
      owner[best] = i;
      claim[i] = best;
    }
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ns; ++i)
    if (claim[i] != kNone) kept.push_back(i);
  if (kept.empty())
    throw EmptyDatasetError("synchronize: no state sample has a truth sample within " +
                            format_double(tolerance) + " s");

  const auto cols = input_columns(bag.schema, set);
  Dataset d;
  d.schema = bag.schema;
  d.feature_set = set;
  const auto n = static_cast<Eigen::Index>(kept.size());
  d.time.resize(n);
  d.inputs.resize(n, static_cast<Eigen::Index>(cols.size()));
  d.truth.resize(n, 3);
  d.reported.resize(n, 3);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = kept[static_cast<std::size_t>(r)];
    d.time[r] = bag.state_time[i];
    for (std::size_t c = 0; c < cols.size(); ++c)
      d.inputs(r, static_cast<Eigen::Index>(c)) = bag.state_features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols[c]));
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      d.truth(r, static_cast<Eigen::Index>(j)) = bag.truth[claim[i]][j];
      d.reported(r, static_cast<Eigen::Index>(j)) = bag.reported[i][j];
    }
  }

  std::vector<Segment> segments = bag.segments;
  if (segments.empty()) segments.push_back({"session", bag.state_time.front(), bag.state_time.back() + 1.0, 0, 0.0, false});
  for (const auto& s : segments) {
    const auto b = static_cast<std::size_t>(std::lower_bound(d.time.data(), d.time.data() + n, s.begin) - d.time.data());
    const auto e = static_cast<std::size_t>(std::lower_bound(d.time.data(), d.time.data() + n, s.end) - d.time.data());
    if (e > b) d.sources.push_back({s, b, e});
  }
  if (bag.meta.contains("manifest_id")) d.manifest_id = bag.meta.at("manifest_id").get<std::string>();
  return d;
}

Dataset normalize_with(const Dataset& d, const NormStats& stats) {
  if (d.normalized) throw PreconditionError("dataset is already normalized");
  Dataset out = d;
  out.inputs = stats.apply(d.inputs);
  out.normalized = true;
  out.norm = stats;
  return out;
}

Split split_and_normalize(const Dataset& d, const SplitPolicy& policy) {
  if (d.rows() < 2) throw PreconditionError("split needs at least 2 rows");
  if (!(policy.train_fraction > 0.0 && policy.train_fraction < 1.0))
    throw InvalidArgument("train_fraction must be in (0, 1)");
  auto n_train = static_cast<std::size_t>(std::llround(policy.train_fraction * static_cast<double>(d.rows())));
  n_train = std::clamp<std::size_t>(n_train, 1, d.rows() - 1);
  Split s;
  const Dataset train = d.rows_range(0, n_train);
  const Dataset test = d.rows_range(n_train, d.rows());
  s.stats = NormStats::fit(train.inputs);
  s.train = normalize_with(train, s.stats);
  s.test = normalize_with(test, s.stats);
  return s;
}

std::vector<Split> kfold_blocks(const Dataset& d, std::size_t k) {
  if (k < 2 || k > d.rows()) throw InvalidArgument("k-fold needs 2 <= k <= rows");
  std::vector<Split> out;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t b = f * d.rows() / k;
    const std::size_t e = (f + 1) * d.rows() / k;
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < d.rows(); ++i) (i >= b && i < e ? test_rows : train_rows).push_back(i);
    Split s;
    const Dataset train = select_rows(d, train_rows);
    s.stats = NormStats::fit(train.inputs);
    s.train = normalize_with(train, s.stats);
    s.test = normalize_with(select_rows(d, test_rows), s.stats);
    out.push_back(std::move(s));
  }
  return out;
}

Dataset concat(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw InvalidArgument("concat of no datasets");
  const Dataset& first = parts.front();
  Eigen::Index n = 0;
  for (const auto& p : parts) {
    if (p.schema != first.schema || p.feature_set != first.feature_set)
      throw SchemaMismatch("concat: datasets have different schemas or feature masks");
    if (p.normalized != first.normalized) throw SchemaMismatch("concat: mixing normalized and raw datasets");
    n += static_cast<Eigen::Index>(p.rows());
  }
  if (parts.size() == 1) return first;
  Dataset out;
  out.schema = first.schema;
  out.feature_set = first.feature_set;
  out.normalized = first.normalized;
  out.norm = first.norm;
  out.manifest_id = first.manifest_id;
  out.time.resize(n);
  out.inputs.resize(n, first.inputs.cols());
  out.truth.resize(n, 3);
  out.reported.resize(n, 3);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    const auto m = static_cast<Eigen::Index>(p.rows());
    out.time.segment(r, m) = p.time;
    out.inputs.middleRows(r, m) = p.inputs;
    out.truth.middleRows(r, m) = p.truth;
    out.reported.middleRows(r, m) = p.reported;
    for (const auto& s : p.sources)
      out.sources.push_back({s.segment, s.row_begin + static_cast<std::size_t>(r), s.row_end + static_cast<std::size_t>(r)});
    r += m;
  }
  return out;
}

// ---------------------------------------------------------------------------

fs::path sidecar_path(const fs::path& file) {
  fs::path p = file;
  p += ".json";
  return p;
}

void write_dataset(const Dataset& d, const fs::path& csv) {
  d.validate();
  {
    auto out = open_out(csv);
    out << 't';
    for (std::size_t i = 0; i < d.dim(); ++i) out << ",x_" << i;
    out << ",q1_true,q2_true,q3_true,q1_rep,q2_rep,q3_rep\n";
    for (Eigen::Index r = 0; r < d.inputs.rows(); ++r) {
      out << format_double(d.time[r]);
      for (Eigen::Index c = 0; c < d.inputs.cols(); ++c) out << ',' << format_double(d.inputs(r, c));
      for (Eigen::Index c = 0; c < 3; ++c) out << ',' << format_double(d.truth(r, c));
      for (Eigen::Index c = 0; c < 3; ++c) out << ',' << format_double(d.reported(r, c));
      out << '\n';
    }
  }
  nlohmann::json j;
  j["version"] = kFileVersion;
  j["rows"] = d.rows();
  j["dim"] = d.dim();
  j["schema"] = d.schema;
  j["schema_hash"] = hex64(d.schema_hash());
  j["feature_set"] = to_string(d.feature_set);
  j["input_names"] = d.input_names();
  j["normalized"] = d.normalized;
  if (d.normalized) j["norm"] = to_json(d.norm);
  j["manifest_id"] = d.manifest_id;
  j["sources"] = nlohmann::json::array();
  for (const auto& s : d.sources) {
    auto sj = segment_json(s.segment);
    sj["row_begin"] = s.row_begin;
    sj["row_end"] = s.row_end;
    j["sources"].push_back(sj);
  }
  write_json_file(sidecar_path(csv), j);
}

Dataset read_dataset(const fs::path& csv) {
  const auto j = read_json_file(sidecar_path(csv));
  if (j.value("version", 0) != kFileVersion) throw FormatError("dataset: unsupported version");
  Dataset d;
  d.schema = j.at("schema").get<FeatureSchema>();
  if (j.contains("schema_hash") && parse_hex64(j.at("schema_hash").get<std::string>()) != d.schema_hash())
    throw SchemaMismatch("dataset: schema hash does not match the stored schema");
  d.feature_set = parse_feature_set(j.at("feature_set").get<std::string>());
  d.normalized = j.value("normalized", false);
  if (d.normalized) d.norm = norm_stats_from_json(j.at("norm"));
  d.manifest_id = j.value("manifest_id", std::string());
  for (const auto& sj : j.at("sources"))
    d.sources.push_back({segment_from_json(sj), sj.at("row_begin").get<std::size_t>(), sj.at("row_end").get<std::size_t>()});
  if (j.contains("input_names") && j.at("input_names").get<std::vector<std::string>>() != d.input_names())
    throw SchemaMismatch("dataset: input names do not match the schema");

  const std::size_t dim = j.at("dim").get<std::size_t>();
  const std::size_t width = 1 + dim + 6;
  CsvReader in(csv);
  std::vector<std::string_view> f;
  if (!in.next(f)) in.fail("missing header");
  if (f.size() != width) in.fail("header width does not match sidecar");
  std::vector<double> t, x, tr, rep;
  while (in.next(f)) {
    if (f.size() != width) in.fail("wrong field count");
    t.push_back(in.number(f[0]));
    for (std::size_t c = 0; c < dim; ++c) x.push_back(in.number(f[1 + c]));
    for (std::size_t c = 0; c < 3; ++c) tr.push_back(in.number(f[1 + dim + c]));
    for (std::size_t c = 0; c < 3; ++c) rep.push_back(in.number(f[4 + dim + c]));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(t.size());
  d.time = Eigen::Map<Eigen::VectorXd>(t.data(), n);
  d.inputs = Eigen::Map<RowMajor>(x.data(), n, static_cast<Eigen::Index>(dim));
  d.truth = Eigen::Map<RowMajor>(tr.data(), n, 3);
  d.reported = Eigen::Map<RowMajor>(rep.data(), n, 3);
  if (j.contains("rows") && j.at("rows").get<std::size_t>() != d.rows())
    throw FormatError("dataset: row count does not match sidecar");
  d.validate();
  return d;
}

}  // namespace cablecal
