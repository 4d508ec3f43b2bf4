#include "hcinr/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hcinr {

double pixel_to_coord(std::size_t index, std::size_t extent) {
  return -1.0 + (2.0 * static_cast<double>(index) + 1.0) / static_cast<double>(extent);
}

double coord_to_pixel(double coord, std::size_t extent) {
  return (coord + 1.0) * static_cast<double>(extent) / 2.0 - 0.5;
}

Grid2D box_smooth(const Grid2D& grid, std::size_t radius) {
  if (radius == 0) return grid;
  Grid2D out(grid.rows, grid.cols);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const auto rows = static_cast<std::ptrdiff_t>(grid.rows);
  const auto cols = static_cast<std::ptrdiff_t>(grid.cols);
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::ptrdiff_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::ptrdiff_t di = -r; di <= r; ++di) {
        const auto ii = std::clamp<std::ptrdiff_t>(i + di, 0, rows - 1);
        for (std::ptrdiff_t dj = -r; dj <= r; ++dj) {
          const auto jj = std::clamp<std::ptrdiff_t>(j + dj, 0, cols - 1);
          acc += grid(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
        }
      }
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          acc / static_cast<double>((2 * r + 1) * (2 * r + 1));
    }
  }
  return out;
}

Grid2D gradient_magnitude(const Grid2D& grid) {
  Grid2D out(grid.rows, grid.cols);
  for (std::size_t i = 0; i < grid.rows; ++i) {
    const std::size_t up = i == 0 ? 0 : i - 1;
    const std::size_t down = std::min(i + 1, grid.rows - 1);
    for (std::size_t j = 0; j < grid.cols; ++j) {
      const std::size_t left = j == 0 ? 0 : j - 1;
      const std::size_t right = std::min(j + 1, grid.cols - 1);
      const double gx = 0.5 * (grid(i, right) - grid(i, left));
      const double gy = 0.5 * (grid(down, j) - grid(up, j));
      out(i, j) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

FeaturePyramid build_feature_pyramid(const Grid2D& signal, const std::vector<std::size_t>& radii) {
  if (signal.rows < 3 || signal.cols < 3) {
    throw std::invalid_argument("build_feature_pyramid: grid must be at least 3x3, got " +
                                std::to_string(signal.rows) + "x" + std::to_string(signal.cols));
  }
  if (signal.values.size() != signal.rows * signal.cols)
    throw std::invalid_argument("build_feature_pyramid: grid storage does not match its extents");
  if (radii.empty()) throw std::invalid_argument("build_feature_pyramid: no scales requested");

  FeaturePyramid pyramid;
  pyramid.radii = radii;
  for (std::size_t r : radii) {
    Grid2D map = gradient_magnitude(box_smooth(signal, r));
    const double peak = *std::max_element(map.values.begin(), map.values.end());
    if (peak > 0.0)
      for (double& v : map.values) v /= peak;
    pyramid.maps.push_back(std::move(map));
  }
  return pyramid;
}

namespace {

struct Bilinear {
  std::size_t r0, r1, c0, c1;
  double wr, wc;
};

Bilinear locate(const FeaturePyramid& p, double x1, double x2) {
  const double u = std::clamp(coord_to_pixel(x1, p.cols()), 0.0, static_cast<double>(p.cols() - 1));
  const double v = std::clamp(coord_to_pixel(x2, p.rows()), 0.0, static_cast<double>(p.rows() - 1));
  Bilinear b;
  b.c0 = static_cast<std::size_t>(std::floor(u));
  b.r0 = static_cast<std::size_t>(std::floor(v));
  b.c1 = std::min(b.c0 + 1, p.cols() - 1);
  b.r1 = std::min(b.r0 + 1, p.rows() - 1);
  b.wc = u - static_cast<double>(b.c0);
  b.wr = v - static_cast<double>(b.r0);
  return b;
}

double sample(const Grid2D& m, const Bilinear& b) {
  const double top = (1.0 - b.wc) * m(b.r0, b.c0) + b.wc * m(b.r0, b.c1);
  const double bottom = (1.0 - b.wc) * m(b.r1, b.c0) + b.wc * m(b.r1, b.c1);
  return (1.0 - b.wr) * top + b.wr * bottom;
}

}  // namespace

std::vector<double> local_features(const FeaturePyramid& pyramid, double x1, double x2) {
  const Bilinear b = locate(pyramid, x1, x2);
  std::vector<double> g(pyramid.scale_count());
  for (std::size_t s = 0; s < g.size(); ++s) g[s] = sample(pyramid.maps[s], b);
  return g;
}

Tensor local_features(const FeaturePyramid& pyramid, const Tensor& coords) {
  if (coords.rank() != 2 || coords.cols() != 2)
    throw ShapeError("local_features: expected [batch, 2] coordinates, got " + shape_string(coords.shape()));
  const std::size_t n = coords.rows();
  const std::size_t s = pyramid.scale_count();
  std::vector<double> out(n * s);
  const auto x = coords.values();
  for (std::size_t i = 0; i < n; ++i) {
    const Bilinear b = locate(pyramid, x[2 * i], x[2 * i + 1]);
    for (std::size_t k = 0; k < s; ++k) out[i * s + k] = sample(pyramid.maps[k], b);
  }
  return Tensor({n, s}, std::move(out));
}

}  // namespace hcinr
