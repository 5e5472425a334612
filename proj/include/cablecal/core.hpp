#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace cablecal {

// Error hierarchy. Every failure surfaced by the library derives from Error so
// the CLI can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class LimitViolation : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kNumJoints = 3;

/// Position of the three positioning joints: j1 and j2 in degrees, j3 in mm.
struct JointVector {
  std::array<double, kNumJoints> v{0.0, 0.0, 0.0};

  constexpr JointVector() = default;
  constexpr JointVector(double j1, double j2, double j3) : v{j1, j2, j3} {}

  constexpr double& operator[](std::size_t i) { return v[i]; }
  constexpr double operator[](std::size_t i) const { return v[i]; }

  double j1() const { return v[0]; }
  double j2() const { return v[1]; }
  double j3() const { return v[2]; }

  bool finite() const;

  Eigen::Vector3d eigen() const { return {v[0], v[1], v[2]}; }
  static JointVector from(const Eigen::Vector3d& e) { return {e[0], e[1], e[2]}; }

  friend JointVector operator+(JointVector a, const JointVector& b) {
    for (std::size_t i = 0; i < kNumJoints; ++i) a.v[i] += b.v[i];
    return a;
  }
  friend JointVector operator-(JointVector a, const JointVector& b) {
    for (std::size_t i = 0; i < kNumJoints; ++i) a.v[i] -= b.v[i];
    return a;
  }
  friend JointVector operator*(double s, JointVector a) {
    for (auto& x : a.v) x *= s;
    return a;
  }
  friend bool operator==(const JointVector&, const JointVector&) = default;
};

/// Inclusive per-joint position limits. Construction validates min < max.
class JointLimits {
 public:
  JointLimits(const JointVector& min, const JointVector& max);

  /// j1, j2 in [0, 90] deg and j3 in [0, 250] mm.
  static JointLimits defaults();

  const JointVector& min() const { return min_; }
  const JointVector& max() const { return max_; }
  JointVector center() const { return 0.5 * (max_ + min_); }
  JointVector range() const { return max_ - min_; }

  bool contains(const JointVector& v, double tolerance = 0.0) const;

  friend bool operator==(const JointLimits&, const JointLimits&) = default;

 private:
  JointVector min_;
  JointVector max_;
};

bool validate_joint_vector(const JointVector& v, const JointLimits& limits);

/// Ordered feature names plus the mask of features used as model input.
/// The order is part of the contract: recorder, dataset, and model must agree
/// byte for byte, which the hash enforces.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<std::string> names, std::vector<bool> selected_mask);

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<bool>& selected_mask() const { return selected_; }

  std::size_t dim_full() const { return names_.size(); }
  std::size_t dim_selected() const;
  std::vector<std::size_t> selected_indices() const;
  std::size_t index_of(const std::string& name) const;

  /// FNV-1a over names and mask.
  std::uint64_t hash() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<bool> selected_;
};

void to_json(nlohmann::json& j, const FeatureSchema& s);
void from_json(const nlohmann::json& j, FeatureSchema& s);
void to_json(nlohmann::json& j, const JointVector& v);
void from_json(const nlohmann::json& j, JointVector& v);
nlohmann::json limits_to_json(const JointLimits& lim);
JointLimits limits_from_json(const nlohmann::json& j);

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t h);
std::uint64_t parse_hex64(const std::string& s);

/// Shortest text that parses back to the same double.
std::string format_double(double x);
/// Strict parse of a whole field; throws FormatError.
double parse_double(std::string_view s);

/// Non-fatal diagnostics (e.g. a solver fallback). Defaults to stderr.
using WarningHandler = std::function<void(const std::string&)>;
WarningHandler set_warning_handler(WarningHandler h);
void warn(const std::string& msg);

/// Which columns of the emitted state vector feed the models.
enum class FeatureSet { Selected, Full };

std::string to_string(FeatureSet s);
FeatureSet parse_feature_set(const std::string& s);

}  // namespace cablecal
