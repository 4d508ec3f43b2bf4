#pragma once

#include "hcinr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testing {

inline hcinr::Tensor random_tensor(std::mt19937_64& rng, hcinr::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(hcinr::shape_numel(shape));
  for (double& x : v) x = u(rng);
  return hcinr::Tensor(std::move(shape), std::move(v));
}

// Entries with |x| >= margin, for ops with a kink at zero.
inline hcinr::Tensor away_from_zero(std::mt19937_64& rng, hcinr::Shape shape, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(hcinr::shape_numel(shape));
  for (double& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return hcinr::Tensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hcinr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
