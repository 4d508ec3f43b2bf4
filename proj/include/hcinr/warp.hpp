#pragma once

// Hierarchical coordinate warps.
//
// Level l maps x to x + alpha_l * tanh(u(x)) with
//   u(x) = A x + b + sum_f c_f sin(2^(l-1) pi <k_f, x> + p_f),
// where (A, b, c, p) are emitted per sample by the level's hypernetwork from
// local features g(x). The final hypernetwork layer starts at zero, so a fresh
// stack is the identity. Linear mode drops the tanh and alpha, leaving the
// raw displacement x + u(x); it exists for analytic fixtures.
//
// Jacobians here are taken with the conditioning features held fixed: each
// level is a map of its input coordinate for the sample's predicted
// parameters.

#include "hcinr/decoder.hpp"
#include "hcinr/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcinr {

enum class DisplacementMode { kBounded, kLinear };
enum class PenaltyMode { kDeviation, kLiteral };

std::string to_string(DisplacementMode m);
std::string to_string(PenaltyMode m);
PenaltyMode penalty_mode_from_string(const std::string& s);

class SingularJacobianError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unit directions k_f: the coordinate axes, then (e_i + e_j)/sqrt2 and
// (e_i - e_j)/sqrt2 for every i < j. Returned as a [d, F] matrix.
Tensor displacement_directions(std::size_t dim);

// Default amplitude cap: 0.3 halved at each finer level.
double default_amplitude(std::size_t level_index);

struct WarpLevel {
  std::size_t index = 1;  // 1-based level number
  std::size_t dim = 2;
  double amplitude = 0.3;
  DisplacementMode mode = DisplacementMode::kBounded;
  Tensor directions;      // [d, F]
  DenseLayer hyper_hidden;  // [features, hidden], tanh
  DenseLayer hyper_out;     // [hidden, warp params + 2 * film_width]
  std::size_t film_width = 0;

  std::size_t atom_count() const { return directions.cols(); }
  std::size_t feature_dim() const { return hyper_hidden.weight.rows(); }
  // d*d (A) + d (b) + d*F (c) + F (p).
  std::size_t warp_param_count() const;
  std::size_t output_count() const { return warp_param_count() + 2 * film_width; }
  double base_frequency() const;
};

struct WarpStack {
  std::size_t dim = 2;
  std::vector<WarpLevel> levels;
  // Per-level weights of the Jacobian penalty.
  std::vector<double> penalty_weights;

  std::size_t parameter_count() const;
};

struct WarpStackConfig {
  std::size_t levels = 3;
  std::size_t dim = 2;
  std::size_t feature_dim = 3;
  std::size_t hyper_hidden = 16;
  std::vector<double> amplitudes;  // empty: defaults
  DisplacementMode mode = DisplacementMode::kBounded;
  std::size_t film_width = 0;      // 0 disables FiLM outputs
};

WarpStack init_warp_stack(const WarpStackConfig& config, std::uint64_t seed);

// A level whose hypernetwork ignores its input and always emits `phi`
// (zero weights, bias = phi). Used for analytic fixtures.
WarpLevel make_fixed_level(std::size_t index, std::size_t dim, const std::vector<double>& phi,
                           DisplacementMode mode, double amplitude = 0.0, std::size_t feature_dim = 1);

// Per-sample parameters of one level, sliced out of the hypernetwork output.
struct LevelParams {
  std::vector<Tensor> a_rows;   // d tensors [B, d]; row i of A
  std::vector<Tensor> offsets;  // d tensors [B, 1]
  std::vector<Tensor> coeffs;   // d tensors [B, F]; c_{f,i} over f
  Tensor phases;                // [B, F]
  std::optional<Tensor> film_gamma;  // [B, H], 1 + raw output
  std::optional<Tensor> film_beta;   // [B, H]
};

// Hypernetwork forward: [B, features] -> [B, output_count].
Tensor hyper_predict(const WarpLevel& level, const Tensor& features);
LevelParams split_level_params(const WarpLevel& level, const Tensor& phi);
// Same result as split_level_params(level, hyper_predict(level, features)).
LevelParams predict_level_params(const WarpLevel& level, const Tensor& features);

struct LevelEval {
  Tensor output;  // x'
  // Intermediate quantities reused by the Jacobian.
  Tensor squashed;   // tanh(u), bounded mode only
  Tensor cos_phase;  // cos(omega <k, x> + p)
};

LevelEval warp_level_eval(const WarpLevel& level, const Tensor& x, const LevelParams& params);
Tensor warp_level_apply(const WarpLevel& level, const Tensor& x, const LevelParams& params);

// Rows of J - I for one level as d tensors of shape [B, d].
std::vector<Tensor> level_jacobian_deviation(const WarpLevel& level,
                                             const LevelParams& params, const LevelEval& eval);

struct StackForward {
  std::vector<Tensor> intermediates;  // x_0 = x, ..., x_L = z
  std::vector<LevelParams> params;
  std::vector<LevelEval> evals;
  const Tensor& output() const { return intermediates.back(); }
};

// Features are evaluated once at the original coordinates and shared by every level.
StackForward warp_stack_forward(const WarpStack& stack, const Tensor& x, const Tensor& features);
Tensor warp_stack_apply(const WarpStack& stack, const Tensor& x, const Tensor& features);

// sum_l lambda_l * mean_batch ||J_l - I||_F^2 (deviation) or ||J_l||_F^2 (literal).
Tensor jacobian_penalty(const WarpStack& stack, const StackForward& forward, PenaltyMode mode);
Tensor jacobian_penalty(const WarpStack& stack, const Tensor& x, const Tensor& features,
                        PenaltyMode mode);

// ---------------------------------------------------------------------------
// Jacobian analysis on arbitrary coordinate maps built from tape ops.

using CoordinateMap = std::function<Tensor(const Tensor&)>;  // [B, d] -> [B, d]

// One Jacobian per row of `points`, via d reverse passes over the batch.
std::vector<Eigen::MatrixXd> jacobians(const CoordinateMap& map, const Tensor& points);
Eigen::MatrixXd jacobian_at(const CoordinateMap& map, const std::vector<double>& x);
Eigen::MatrixXd finite_difference_jacobian(const CoordinateMap& map, const std::vector<double>& x,
                                           double step = 1e-5);
Eigen::MatrixXd inverse_jacobian(const Eigen::MatrixXd& j);
double spectral_norm(const Eigen::MatrixXd& j);

struct JacobianReport {
  Tensor samples;
  std::vector<Eigen::MatrixXd> matrices;
  std::vector<double> determinants;
  std::vector<double> spectral_norms;
  double folding_fraction = 0.0;
};

JacobianReport jacobian_report(const CoordinateMap& map, const Tensor& points);
double lipschitz_estimate(const CoordinateMap& map, const Tensor& points);
double lipschitz_estimate(const JacobianReport& report);
double composition_bound(const std::vector<double>& level_constants);
double folding_fraction(const CoordinateMap& map, const Tensor& points);

// Inclusive lattice over [lo, hi]^d with n points per axis, [n^d, d].
Tensor lattice_points(std::size_t dim, std::size_t n, double lo = -1.0, double hi = 1.0);

// Fixtures.
CoordinateMap affine_map(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);
CoordinateMap sine_warp_1d(double amplitude);  // x + a sin(pi x)
// The stack as a map of the coordinate, with conditioning looked up by
// `features_of` at the original coordinates.
CoordinateMap stack_map(const WarpStack& stack, std::function<Tensor(const Tensor&)> features_of);
// Level `index` (0-based) as a map of its input, with fixed conditioning rows.
CoordinateMap level_map(const WarpStack& stack, std::size_t index, const Tensor& features);

// Jacobian CSV rows: x..., det, spectral_norm.
void write_jacobian_csv(const JacobianReport& report, const std::string& path);

}  // namespace hcinr
