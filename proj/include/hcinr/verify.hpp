#pragma once

// Numerical checks of the warp stability results and the Fourier change of
// variables, each producing a JSON-serializable verdict.

#include "hcinr/model.hpp"
#include "hcinr/spectral.hpp"
#include "hcinr/warp.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hcinr {

struct CheckVerdict {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const CheckVerdict& v);

// Pixel-centre coordinates of a rows x cols raster, x1 varying fastest.
Tensor pixel_grid(std::size_t rows, std::size_t cols);

// max spectral norm over the grid versus an analytic value.
CheckVerdict check_lipschitz(const std::string& name, const CoordinateMap& map, const Tensor& grid,
                             double analytic, double tolerance);

// ‖T(x) - T(y)‖ <= (lambda_hat + slack) ‖x - y‖ on random pairs in [-1,1]^d.
CheckVerdict check_pairwise_lipschitz(const std::string& name, const CoordinateMap& map, std::size_t dim,
                                      double lambda_hat, double slack, std::size_t pairs, std::uint64_t seed);

// lambda_hat(composite) <= prod lambda_hat(level) + tolerance, with every
// level estimated on the image of the grid under the preceding levels.
// `features` are the conditioning rows for the grid points.
CheckVerdict check_composition(const std::string& name, const WarpStack& stack, const Tensor& grid,
                               const Tensor& features, double tolerance = 1e-6);

CheckVerdict check_folding(const std::string& name, const CoordinateMap& map, const Tensor& grid, double expected,
                           double tolerance);

CheckVerdict check_affine_cov(const std::string& name, const BandLimitedSignal& signal, const Eigen::Matrix2d& a,
                              double tolerance = 1e-6, std::size_t n = 64);

// Compares radial_bandwidth of s(scale * x) with scale * radial_bandwidth(s) + 1 bin.
CheckVerdict check_bandwidth_contraction(const std::string& name, const BandLimitedSignal& signal, double scale,
                                         std::size_t n = 128);

// Random band-limited signal whose tone frequencies are multiples of `step`.
BandLimitedSignal random_band_limited(std::size_t tones, int max_frequency, int step, std::uint64_t seed);

// A two-level linear-mode stack with random fixed parameters of size `scale`.
WarpStack random_linear_stack(std::size_t dim, double scale, std::uint64_t seed);

// Fixture suite: Lipschitz on identity / diag(2, 0.5) / 1D sine warp,
// pairwise inequality, compositions of random linear stacks, folding of
// the sine warp and the reflection, and the spectral checks.
std::vector<CheckVerdict> analytic_suite(std::uint64_t seed = 0);

// Checks on a model's warp: identity-level Lipschitz bounds, composition,
// folding on a 128^2 grid, and the pointwise effective-bandwidth factor.
std::vector<CheckVerdict> model_suite(const HcInrModel& model, const FeaturePyramid& pyramid,
                                      bool expect_identity);

nlohmann::json verdicts_to_json(const std::vector<CheckVerdict>& verdicts);

}  // namespace hcinr
