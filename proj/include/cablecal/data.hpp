#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "cablecal/core.hpp"
#include "cablecal/sim.hpp"

namespace cablecal {

inline constexpr double kDefaultSyncTolerance = 0.010;  // s

/// A labelled time window inside a recording (one trajectory, one test run...).
struct Segment {
  std::string label;
  double begin = 0.0;
  double end = 0.0;
  int homing_count = 0;
  double load_g = 0.0;
  bool idle = false;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Flat container for the two recorded streams of one session.
struct RecordedBag {
  FeatureSchema schema;
  std::vector<double> state_time;
  Eigen::MatrixXd state_features;  // one row per state sample, dim_full columns
  std::vector<JointVector> reported;
  std::vector<double> truth_time;
  std::vector<JointVector> truth;
  std::vector<Segment> segments;
  nlohmann::json meta = nlohmann::json::object();  // trajectory, load, seed, rates...

  std::size_t state_count() const { return state_time.size(); }
  std::size_t truth_count() const { return truth_time.size(); }

  /// Checks sorted timestamps and schema width; throws FormatError.
  void validate() const;

  /// Appends a later chunk of the same recording.
  void append(const RecordedBag& later);
};

RecordedBag make_bag(const SessionResult& session, const FeatureSchema& schema = default_feature_schema(),
                     nlohmann::json meta = nlohmann::json::object());

/// Bag directory layout: state.csv, truth.csv, meta.json.
void write_bag(const RecordedBag& bag, const std::filesystem::path& dir);
RecordedBag read_bag(const std::filesystem::path& dir);

/// Per-column mean and standard deviation. Columns with zero spread are
/// flagged and get sd = 1 so they normalize to exactly zero.
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  std::vector<bool> constant;

  static NormStats fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t constant_count() const;
};

nlohmann::json to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::json& j);

/// Synchronized training pairs. Rows are in time order within each source.
struct Dataset {
  FeatureSchema schema;
  FeatureSet feature_set = FeatureSet::Selected;
  Eigen::VectorXd time;
  Eigen::MatrixXd inputs;    // N x D
  Eigen::MatrixXd truth;     // N x 3
  Eigen::MatrixXd reported;  // N x 3
  /// Row ranges [begin, end) of the recordings this dataset came from.
  struct Source {
    Segment segment;
    std::size_t row_begin = 0;
    std::size_t row_end = 0;
    friend bool operator==(const Source&, const Source&) = default;
  };
  std::vector<Source> sources;
  /// Set when inputs have been normalized with train statistics.
  bool normalized = false;
  NormStats norm;
  std::string manifest_id;

  std::size_t rows() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }

  /// truth - reported, the labels of on-error training.
  Eigen::MatrixXd errors() const { return truth - reported; }

  /// Names of the input columns, in order.
  std::vector<std::string> input_names() const;
  std::uint64_t schema_hash() const { return schema.hash(); }

  Dataset rows_range(std::size_t begin, std::size_t end) const;
  /// Rows with begin <= time < end.
  Dataset time_window(double begin, double end) const;
  /// Rows belonging to sources whose label equals `label`.
  Dataset with_label(const std::string& label) const;

  void validate() const;
};

/// Pairs each state sample with the nearest truth sample within `tolerance`
/// seconds. Ties go to the earlier truth sample; a truth sample is used at
/// most once (the nearest state sample keeps it, earlier wins ties).
Dataset synchronize(const RecordedBag& bag, double tolerance = kDefaultSyncTolerance,
                    FeatureSet set = FeatureSet::Selected);

struct SplitPolicy {
  double train_fraction = 0.8;
};

struct Split {
  Dataset train;
  Dataset test;
  NormStats stats;
};

/// Contiguous time-block split; statistics come from the train block only.
Split split_and_normalize(const Dataset& d, const SplitPolicy& policy = {});

/// k contiguous folds; fold i is the test block of split i.
std::vector<Split> kfold_blocks(const Dataset& d, std::size_t k);

/// Applies precomputed statistics (e.g. from a training set) to a dataset.
Dataset normalize_with(const Dataset& d, const NormStats& stats);

/// Row-wise concatenation; schemas and feature sets must match.
Dataset concat(const std::vector<Dataset>& parts);

/// Dataset file: CSV `t, x_0..x_{D-1}, q1_true, q2_true, q3_true, q1_rep, q2_rep, q3_rep`
/// plus `<path>.json` holding the schema and metadata.
void write_dataset(const Dataset& d, const std::filesystem::path& csv);
Dataset read_dataset(const std::filesystem::path& csv);

std::filesystem::path sidecar_path(const std::filesystem::path& file);

}  // namespace cablecal
