#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "wahnerf/diffmath.hpp"
#include "wahnerf/random.hpp"

namespace test {

inline std::vector<double> uniform_values(wah::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = wah::uniform(rng, lo, hi);
  return v;
}

inline wah::DualArray random_array(wah::Rng& rng, wah::Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = wah::shape_size(shape);
  return wah::DualArray(std::move(shape), uniform_values(rng, n, lo, hi));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wahnerf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
