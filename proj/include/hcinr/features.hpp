#pragma once

#include "hcinr/tensor.hpp"

#include <cstddef>
#include <vector>

namespace hcinr {

// Single-channel raster, row-major, row 0 at the top.
struct Grid2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid2D() = default;
  Grid2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Pixel-centre convention shared by every raster in the project: column j maps
// to x1 = -1 + (2j + 1) / cols, row i to x2 = -1 + (2i + 1) / rows.
double pixel_to_coord(std::size_t index, std::size_t extent);
double coord_to_pixel(double coord, std::size_t extent);

// Multiscale gradient-magnitude maps of a target signal, each normalized to a
// maximum of 1 (all-zero maps stay zero).
struct FeaturePyramid {
  std::vector<std::size_t> radii;
  std::vector<Grid2D> maps;

  std::size_t scale_count() const { return maps.size(); }
  std::size_t rows() const { return maps.empty() ? 0 : maps.front().rows; }
  std::size_t cols() const { return maps.empty() ? 0 : maps.front().cols; }
};

inline const std::vector<std::size_t> kDefaultFeatureRadii = {0, 1, 2};

Grid2D box_smooth(const Grid2D& grid, std::size_t radius);
Grid2D gradient_magnitude(const Grid2D& grid);

FeaturePyramid build_feature_pyramid(const Grid2D& signal,
                                     const std::vector<std::size_t>& radii = kDefaultFeatureRadii);

// Bilinear lookup of every scale map at x in [-1,1]^2 (clamped to the pixel
// centre hull). Returns one value per scale, each in [0, 1].
std::vector<double> local_features(const FeaturePyramid& pyramid, double x1, double x2);

// Batched lookup: [batch, 2] coordinates -> [batch, scales] constant tensor.
Tensor local_features(const FeaturePyramid& pyramid, const Tensor& coords);

}  // namespace hcinr
