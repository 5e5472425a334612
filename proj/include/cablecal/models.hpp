#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "cablecal/core.hpp"
#include "cablecal/data.hpp"
#include "cablecal/mlp.hpp"

namespace cablecal {

/// OnError: the model predicts truth - reported and adds it back.
/// EndToEnd: the model predicts truth directly.
enum class OutputMode { OnError, EndToEnd };

std::string to_string(OutputMode m);
/// Accepts "on-error" and "e2e" / "end-to-end".
OutputMode parse_output_mode(const std::string& s);

enum class ModelKind { Offset, Linear, Poly2, Mlp };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// Per-column affine map used to bring inputs or targets to unit scale.
/// Columns that were constant in training are excluded: they map to 0
/// whatever value they take later.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  std::vector<bool> constant;

  static Standardizer fit(const Eigen::MatrixXd& x);
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  std::vector<std::size_t> active() const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  void apply(const double* x, double* z) const;
};

/// Everything a trained model needs to validate its inputs.
struct ModelSignature {
  std::uint64_t schema_hash = 0;
  FeatureSet feature_set = FeatureSet::Selected;
  std::size_t input_dim = 0;
  std::vector<std::string> input_names;
  /// Whether the training inputs had already been normalized by the data stage.
  bool normalized_inputs = false;
};

struct FitInfo {
  std::vector<std::string> warnings;
  std::vector<double> loss_curve;  // per epoch, MLP only
  double seconds = 0.0;
  std::size_t rows = 0;
};

class CalibrationModel {
 public:
  virtual ~CalibrationModel() = default;

  virtual ModelKind kind() const = 0;
  OutputMode mode() const { return mode_; }
  const ModelSignature& signature() const { return sig_; }
  const FitInfo& fit_info() const { return info_; }

  /// Calibrated joint positions for one sample. `features` holds input_dim
  /// values in signature order. Safe to call concurrently.
  virtual JointVector predict(const double* features, const JointVector& reported) const = 0;

  /// Checks the dataset against the signature and predicts every row (N x 3).
  Eigen::MatrixXd predict(const Dataset& d) const;

  void check_compatible(const Dataset& d) const;

  virtual nlohmann::json parameters() const = 0;
  virtual std::size_t parameter_count() const = 0;

 protected:
  OutputMode mode_ = OutputMode::OnError;
  ModelSignature sig_;
  FitInfo info_;

  friend std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& j);
};

/// Mean training error added to every reported position.
class FixedOffsetModel final : public CalibrationModel {
 public:
  FixedOffsetModel() = default;
  FixedOffsetModel(const JointVector& offsets, ModelSignature sig);

  ModelKind kind() const override { return ModelKind::Offset; }
  using CalibrationModel::predict;
  JointVector predict(const double* features, const JointVector& reported) const override;
  nlohmann::json parameters() const override;
  std::size_t parameter_count() const override { return kNumJoints; }

  const JointVector& offsets() const { return offsets_; }

 private:
  JointVector offsets_;
  friend std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& j);
  friend FixedOffsetModel fit_offset(const Dataset& train);
};

/// Affine map of the inputs. Weights are kept in raw input units
/// ((D + 1) x 3, bias first) so prediction is one small matrix-vector product.
class LinearModel final : public CalibrationModel {
 public:
  ModelKind kind() const override { return ModelKind::Linear; }
  using CalibrationModel::predict;
  JointVector predict(const double* features, const JointVector& reported) const override;
  nlohmann::json parameters() const override;
  std::size_t parameter_count() const override { return static_cast<std::size_t>(weights_.size()); }

  /// Row 0 is the bias, row 1 + i the coefficient of input i.
  const Eigen::MatrixXd& weights() const { return weights_; }

 private:
  Eigen::MatrixXd weights_;
  friend std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& j);
  friend LinearModel fit_linear(const Dataset& train, OutputMode mode, double ridge);
};

/// Ridge regression on all monomials of degree <= 2 of the standardized inputs.
class PolyModel final : public CalibrationModel {
 public:
  ModelKind kind() const override { return ModelKind::Poly2; }
  using CalibrationModel::predict;
  JointVector predict(const double* features, const JointVector& reported) const override;
  nlohmann::json parameters() const override;
  std::size_t parameter_count() const override { return static_cast<std::size_t>(weights_.size()); }

  /// 1 + D + D(D+1)/2 for D active inputs.
  std::size_t expanded_dim() const { return static_cast<std::size_t>(weights_.rows()); }

 private:
  void expand(const double* x, double* out) const;
  Standardizer in_;
  std::vector<std::size_t> active_;
  Standardizer out_;
  Eigen::MatrixXd weights_;  // expanded x 3, on standardized targets
  friend std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& j);
  friend PolyModel fit_poly2(const Dataset& train, OutputMode mode, double ridge, bool allow_large);
};

struct MlpConfig {
  std::vector<std::size_t> hidden{100, 100};
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LayerPenalty hidden_penalty{0.0, 5e-4, 0.0, 0.0};
  LayerPenalty output_penalty{0.0, 5e-4, 0.0, 0.0};

  /// 600/500/400 hidden units with the heavier mixed regularization.
  static MlpConfig large();

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

nlohmann::json to_json(const MlpConfig& c);
MlpConfig mlp_config_from_json(const nlohmann::json& j);

class MlpModel final : public CalibrationModel {
 public:
  ModelKind kind() const override { return ModelKind::Mlp; }
  using CalibrationModel::predict;
  JointVector predict(const double* features, const JointVector& reported) const override;
  nlohmann::json parameters() const override;
  std::size_t parameter_count() const override { return net_.parameter_count(); }

  const Mlp& network() const { return net_; }
  const MlpConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Standardizer in_;
  Standardizer out_;
  Mlp net_;
  MlpConfig cfg_;
  std::uint64_t seed_ = 0;
  friend std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& j);
  friend MlpModel fit_mlp(const Dataset& train, OutputMode mode, const MlpConfig& cfg, std::uint64_t seed);
};

FixedOffsetModel fit_offset(const Dataset& train);

/// Minimizes |Xw - y|^2 + ridge |w|^2 on standardized inputs and targets; the
/// bias is not penalized. A singular system falls back to the minimum-norm
/// solution with a warning.
LinearModel fit_linear(const Dataset& train, OutputMode mode, double ridge = 0.0);

/// Refuses more than 64 active inputs unless allow_large is set.
PolyModel fit_poly2(const Dataset& train, OutputMode mode, double ridge = 0.0, bool allow_large = false);

/// Adam on shuffled mini-batches. Throws Error on a non-finite loss.
MlpModel fit_mlp(const Dataset& train, OutputMode mode, const MlpConfig& cfg = {}, std::uint64_t seed = 1);

inline constexpr std::size_t kPoly2MaxInputs = 64;

struct TrainOptions {
  ModelKind kind = ModelKind::Linear;
  OutputMode mode = OutputMode::OnError;
  double ridge = 0.0;
  bool allow_large_poly = false;
  MlpConfig mlp;
  std::uint64_t seed = 1;
};

std::unique_ptr<CalibrationModel> train_model(const Dataset& train, const TrainOptions& opts);

// ---------------------------------------------------------------------------
// Serialization

enum class ModelFormat { Json, Cbor };

std::string to_string(ModelFormat f);
ModelFormat parse_model_format(const std::string& s);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const CalibrationModel& m, const std::string& manifest_id = {});
std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> serialize(const CalibrationModel& m, ModelFormat format = ModelFormat::Json,
                                    const std::string& manifest_id = {});
/// Format is detected from the first byte. Rejects unknown versions, damaged
/// payloads, and hash mismatches.
std::unique_ptr<CalibrationModel> deserialize(const std::vector<std::uint8_t>& bytes);

/// Like deserialize, but also refuses a model whose mode or schema differs
/// from what the caller expects.
std::unique_ptr<CalibrationModel> deserialize_expecting(const std::vector<std::uint8_t>& bytes, OutputMode mode,
                                                        std::uint64_t schema_hash);

void save_model(const CalibrationModel& m, const std::filesystem::path& path, ModelFormat format = ModelFormat::Json,
                const std::string& manifest_id = {});
std::unique_ptr<CalibrationModel> load_model(const std::filesystem::path& path);

}  // namespace cablecal
