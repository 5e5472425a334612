#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Core>

#include "cablecal/data.hpp"
#include "cablecal/sim.hpp"

namespace testutil {

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cablecal_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Dataset with a plain schema x0..x{d-1}, all selected.
inline cablecal::Dataset make_dataset(const Eigen::MatrixXd& x, const Eigen::MatrixXd& truth,
                                      const Eigen::MatrixXd& reported) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < x.cols(); ++i) names.push_back("x" + std::to_string(i));
  cablecal::Dataset d;
  d.schema = cablecal::FeatureSchema(names, std::vector<bool>(names.size(), true));
  d.inputs = x;
  d.truth = truth;
  d.reported = reported;
  d.time = Eigen::VectorXd::LinSpaced(x.rows(), 0.0, 0.01 * static_cast<double>(x.rows() - 1));
  d.sources.push_back({{"train", 0.0, 1e9, 0, 0.0, false}, 0, static_cast<std::size_t>(x.rows())});
  return d;
}

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace testutil
