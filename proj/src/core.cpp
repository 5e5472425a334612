#include "cablecal/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <json.hpp>

namespace cablecal {

bool JointVector::finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

JointLimits::JointLimits(const JointVector& min, const JointVector& max) : min_(min), max_(max) {
  if (!min.finite() || !max.finite()) throw InvalidArgument("joint limits must be finite");
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    if (!(min[i] < max[i]))
      throw InvalidArgument("joint limits: min must be < max on joint " + std::to_string(i + 1));
  }
}

JointLimits JointLimits::defaults() { return {{0.0, 0.0, 0.0}, {90.0, 90.0, 250.0}}; }

bool JointLimits::contains(const JointVector& v, double tolerance) const {
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    if (!(v[i] >= min_[i] - tolerance && v[i] <= max_[i] + tolerance)) return false;
  }
  return true;
}

bool validate_joint_vector(const JointVector& v, const JointLimits& limits) {
  return v.finite() && limits.contains(v);
}

FeatureSchema::FeatureSchema(std::vector<std::string> names, std::vector<bool> selected_mask)
    : names_(std::move(names)), selected_(std::move(selected_mask)) {
  if (names_.size() != selected_.size())
    throw InvalidArgument("feature schema: mask length differs from name count");
}

std::size_t FeatureSchema::dim_selected() const {
  std::size_t n = 0;
  for (bool b : selected_) n += b ? 1 : 0;
  return n;
}

std::vector<std::size_t> FeatureSchema::selected_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < selected_.size(); ++i)
    if (selected_[i]) idx.push_back(i);
  return idx;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw InvalidArgument("feature schema has no feature '" + name + "'");
}

std::uint64_t FeatureSchema::hash() const {
  std::uint64_t h = fnv1a64(nullptr, 0);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    h = fnv1a64(names_[i].data(), names_[i].size(), h);
    const char tag = selected_[i] ? '\1' : '\0';
    h = fnv1a64(&tag, 1, h);
  }
  return h;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw FormatError("expected 16 hex digits, got '" + s + "'");
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw FormatError("bad hex digest '" + s + "'");
  return v;
}

void to_json(nlohmann::json& j, const FeatureSchema& s) {
  j = nlohmann::json{{"names", s.names()}, {"selected", s.selected_mask()}, {"hash", hex64(s.hash())}};
}

void from_json(const nlohmann::json& j, FeatureSchema& s) {
  s = FeatureSchema(j.at("names").get<std::vector<std::string>>(),
                    j.at("selected").get<std::vector<bool>>());
  if (j.contains("hash") && parse_hex64(j.at("hash").get<std::string>()) != s.hash())
    throw SchemaMismatch("feature schema hash does not match its names/mask");
}

void to_json(nlohmann::json& j, const JointVector& v) { j = nlohmann::json::array({v[0], v[1], v[2]}); }

void from_json(const nlohmann::json& j, JointVector& v) {
  if (!j.is_array() || j.size() != kNumJoints) throw FormatError("joint vector must have 3 entries");
  for (std::size_t i = 0; i < kNumJoints; ++i) v[i] = j[i].get<double>();
}

nlohmann::json limits_to_json(const JointLimits& lim) {
  return {{"min", lim.min()}, {"max", lim.max()}};
}

JointLimits limits_from_json(const nlohmann::json& j) {
  return {j.at("min").get<JointVector>(), j.at("max").get<JointVector>()};
}

std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw FormatError("cannot format double");
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("bad number '" + std::string(s) + "'");
  return v;
}

namespace {
std::mutex warn_mutex;
WarningHandler& warning_handler() {
  static WarningHandler h = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return h;
}
}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(warn_mutex);
  std::swap(warning_handler(), h);
  return h;
}

void warn(const std::string& msg) {
  std::lock_guard lock(warn_mutex);
  if (warning_handler()) warning_handler()(msg);
}

std::string to_string(FeatureSet s) { return s == FeatureSet::Selected ? "selected" : "full"; }

FeatureSet parse_feature_set(const std::string& s) {
  if (s == "selected") return FeatureSet::Selected;
  if (s == "full") return FeatureSet::Full;
  throw InvalidArgument("unknown feature set '" + s + "' (expected selected|full)");
}

}  // namespace cablecal
