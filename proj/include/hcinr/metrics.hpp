#pragma once

#include "hcinr/features.hpp"
#include "hcinr/tasks.hpp"
#include "hcinr/tensor.hpp"

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hcinr {

// Peak 1. Identical inputs give +infinity.
double psnr(std::span<const double> pred, std::span<const double> target);
double mse(std::span<const double> pred, std::span<const double> target);

// Mean SSIM over every 8x8 window (stride 1) of a single-channel grid, with
// population statistics and C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Grid2D& pred, const Grid2D& target);
// Multi-channel images are averaged per channel.
double ssim(const Image& pred, const Image& target);

// "inf" / "-inf" / "nan" or the shortest round-trip decimal.
std::string format_metric(double v);

using Point2 = std::array<double, 2>;

// Zero crossings of a field sampled on an inclusive n x n lattice over
// [-1,1]^2, one point per sign-changing lattice edge, placed by linear
// interpolation. `values` is row-major with rows along x2.
std::vector<Point2> zero_level_set(const std::vector<double>& values, std::size_t n);

// 0.5 * (mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2). Squared distances.
double chamfer_distance(const std::vector<Point2>& a, const std::vector<Point2>& b);

using ScalarField = std::function<Tensor(const Tensor&)>;  // [B,2] -> [B,1]

// Chamfer distance between the zero sets of `field` and the analytic shape,
// both sampled on the same lattice. Throws "no zero crossing" when either set
// is empty.
double chamfer_2d(const ScalarField& field, const SdfShape& shape, std::size_t grid_res);

// Mean |‖∇f‖ - 1| over the sample points, gradients by one reverse pass.
double eikonal_residual(const ScalarField& field, const Tensor& samples);

void write_points_csv(const std::vector<Point2>& points, const std::string& path);

}  // namespace hcinr
