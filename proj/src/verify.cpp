#include "hcinr/verify.hpp"

#include "hcinr/features.hpp"
#include "hcinr/training.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace hcinr {

nlohmann::json to_json(const CheckVerdict& v) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  };
  return {{"check", v.name},
          {"passed", v.passed},
          {"measured", num(v.measured)},
          {"expected", num(v.expected)},
          {"tolerance", num(v.tolerance)},
          {"details", v.details}};
}

nlohmann::json verdicts_to_json(const std::vector<CheckVerdict>& verdicts) {
  nlohmann::json out = nlohmann::json::array();
  bool all = true;
  for (const auto& v : verdicts) {
    out.push_back(to_json(v));
    all = all && v.passed;
  }
  return {{"all_passed", all}, {"checks", out}};
}

Tensor pixel_grid(std::size_t rows, std::size_t cols) {
  std::vector<double> c(rows * cols * 2);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c[2 * (i * cols + j)] = pixel_to_coord(j, cols);
      c[2 * (i * cols + j) + 1] = pixel_to_coord(i, rows);
    }
  }
  return Tensor::matrix(rows * cols, 2, std::move(c));
}

CheckVerdict check_lipschitz(const std::string& name, const CoordinateMap& map, const Tensor& grid, double analytic,
                             double tolerance) {
  CheckVerdict v;
  v.name = name;
  v.measured = lipschitz_estimate(map, grid);
  v.expected = analytic;
  v.tolerance = tolerance;
  v.passed = std::abs(v.measured - analytic) <= tolerance;
  v.details["grid_points"] = grid.rows();
  return v;
}

CheckVerdict check_pairwise_lipschitz(const std::string& name, const CoordinateMap& map, std::size_t dim,
                                      double lambda_hat, double slack, std::size_t pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(pairs * dim), b(pairs * dim);
  for (std::size_t p = 0; p < pairs; ++p)
    for (std::size_t i = 0; i < dim; ++i) {
      a[p * dim + i] = u(rng);
      b[p * dim + i] = u(rng);
    }
  const Tensor ta = map(Tensor::matrix(pairs, dim, a));
  const Tensor tb = map(Tensor::matrix(pairs, dim, b));
  double worst_ratio = 0.0;
  std::size_t violations = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    double dx = 0.0, dt = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      dx += (a[p * dim + i] - b[p * dim + i]) * (a[p * dim + i] - b[p * dim + i]);
      dt += (ta[p * dim + i] - tb[p * dim + i]) * (ta[p * dim + i] - tb[p * dim + i]);
    }
    dx = std::sqrt(dx);
    dt = std::sqrt(dt);
    if (dx == 0.0) continue;
    worst_ratio = std::max(worst_ratio, dt / dx);
    if (dt > (lambda_hat + slack) * dx) ++violations;
  }
  CheckVerdict v;
  v.name = name;
  v.measured = worst_ratio;
  v.expected = lambda_hat;
  v.tolerance = slack;
  v.passed = violations == 0;
  v.details = {{"pairs", pairs}, {"violations", violations}};
  return v;
}

CheckVerdict check_composition(const std::string& name, const WarpStack& stack, const Tensor& grid,
                               const Tensor& features, double tolerance) {
  const Tensor conditioning = features.detach();
  const StackForward fw = warp_stack_forward(stack, grid.detach(), conditioning);
  std::vector<double> level_constants;
  for (std::size_t l = 0; l < stack.levels.size(); ++l)
    level_constants.push_back(lipschitz_estimate(level_map(stack, l, conditioning), fw.intermediates[l]));
  const CoordinateMap composite = [&stack, conditioning](const Tensor& x) {
    return warp_stack_apply(stack, x, conditioning);
  };
  CheckVerdict v;
  v.name = name;
  v.measured = lipschitz_estimate(composite, grid);
  v.expected = composition_bound(level_constants);
  v.tolerance = tolerance;
  v.passed = v.measured <= v.expected + tolerance;
  v.details["level_constants"] = level_constants;
  return v;
}

CheckVerdict check_folding(const std::string& name, const CoordinateMap& map, const Tensor& grid, double expected,
                           double tolerance) {
  CheckVerdict v;
  v.name = name;
  v.measured = folding_fraction(map, grid);
  v.expected = expected;
  v.tolerance = tolerance;
  v.passed = std::abs(v.measured - expected) <= tolerance;
  v.details["grid_points"] = grid.rows();
  return v;
}

CheckVerdict check_affine_cov(const std::string& name, const BandLimitedSignal& signal, const Eigen::Matrix2d& a,
                              double tolerance, std::size_t n) {
  const CovCheckResult r = affine_cov_check(signal, a, n);
  CheckVerdict v;
  v.name = name;
  v.measured = r.max_relative_error;
  v.expected = 0.0;
  v.tolerance = tolerance;
  v.passed = r.compared_bins > 0 && r.max_relative_error < tolerance;
  v.details = {{"compared_bins", r.compared_bins},
               {"matrix", {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}}},
               {"peak_bin", {r.peak_k1, r.peak_k2}}};
  return v;
}

CheckVerdict check_bandwidth_contraction(const std::string& name, const BandLimitedSignal& signal, double scale,
                                         std::size_t n) {
  const double original = radial_bandwidth(dft2(signal.rasterize(n)));
  const Eigen::Matrix2d m = scale * Eigen::Matrix2d::Identity();
  const double warped = radial_bandwidth(dft2(signal.rasterize_resampled(n, m)));
  CheckVerdict v;
  v.name = name;
  v.measured = warped;
  v.expected = scale * original;
  v.tolerance = 1.0;
  v.passed = warped <= scale * original + 1.0;
  v.details = {{"original_bandwidth", original}, {"scale", scale}};
  return v;
}

BandLimitedSignal random_band_limited(std::size_t tones, int max_frequency, int step, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> k(-max_frequency / step, max_frequency / step);
  std::uniform_real_distribution<double> amp(0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  BandLimitedSignal s;
  while (s.tones.size() < tones) {
    const int k1 = k(rng) * step;
    const int k2 = k(rng) * step;
    if (k1 == 0 && k2 == 0) continue;
    s.tones.push_back(Tone{k1, k2, amp(rng), phase(rng)});
  }
  return s;
}

WarpStack random_linear_stack(std::size_t dim, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  const std::size_t atoms = displacement_directions(dim).cols();
  WarpStack stack;
  stack.dim = dim;
  for (std::size_t l = 1; l <= 2; ++l) {
    std::vector<double> phi(dim * dim + dim + (dim + 1) * atoms);
    for (double& p : phi) p = u(rng);
    stack.levels.push_back(make_fixed_level(l, dim, phi, DisplacementMode::kLinear));
    stack.penalty_weights.push_back(0.0);
  }
  return stack;
}

std::vector<CheckVerdict> analytic_suite(std::uint64_t seed) {
  std::vector<CheckVerdict> out;
  const Tensor grid2 = lattice_points(2, 64);
  const Tensor grid1 = lattice_points(1, 4096);

  // Lipschitz estimates against closed forms.
  const CoordinateMap identity = affine_map(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero());
  const CoordinateMap stretch = affine_map(Eigen::Vector2d(2.0, 0.5).asDiagonal().toDenseMatrix(), Eigen::Vector2d::Zero());
  const double a = 2.0 / std::numbers::pi;
  const CoordinateMap sine = sine_warp_1d(a);
  out.push_back(check_lipschitz("lipschitz/identity", identity, grid2, 1.0, 1e-3));
  out.push_back(check_lipschitz("lipschitz/diag(2,0.5)", stretch, grid2, 2.0, 1e-3));
  out.push_back(check_lipschitz("lipschitz/sine-warp", sine, grid1, 1.0 + a * std::numbers::pi, 1e-3));

  // Pairwise form, slack matching the estimate tolerance.
  out.push_back(check_pairwise_lipschitz("pairwise/identity", identity, 2, out[0].measured, 1e-3, 10000, seed));
  out.push_back(check_pairwise_lipschitz("pairwise/diag(2,0.5)", stretch, 2, out[1].measured, 1e-3, 10000, seed + 1));
  out.push_back(check_pairwise_lipschitz("pairwise/sine-warp", sine, 1, out[2].measured, 1e-3, 10000, seed + 2));

  // Composition of random linear-mode stacks.
  const Tensor no_features = Tensor::zeros({grid2.rows(), 1});
  for (std::uint64_t k = 0; k < 20; ++k)
    out.push_back(check_composition("composition/random-linear-" + std::to_string(k),
                                    random_linear_stack(2, 0.1, seed * 1000 + k), grid2, no_features));

  // Folding.
  out.push_back(check_folding("folding/identity", identity, grid2, 0.0, 0.0));
  out.push_back(check_folding("folding/reflection-1d", affine_map(-Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1)),
                              grid1, 1.0, 0.0));
  out.push_back(check_folding("folding/sine-warp", sine, grid1, 1.0 / 3.0, 2.0 / 4096.0));

  // Fourier change of variables and bandwidth contraction.
  const BandLimitedSignal two_tone = bundled_two_tone();
  out.push_back(check_affine_cov("cov/identity", two_tone, Eigen::Matrix2d::Identity()));
  out.push_back(check_affine_cov("cov/diag(2,1)", two_tone, Eigen::Vector2d(2.0, 1.0).asDiagonal().toDenseMatrix()));
  out.push_back(check_affine_cov("cov/diag(2,2)", two_tone, Eigen::Vector2d(2.0, 2.0).asDiagonal().toDenseMatrix()));
  const BandLimitedSignal wide = random_band_limited(6, 48, 4, seed + 7);
  out.push_back(check_bandwidth_contraction("contraction/0.5", wide, 0.5));
  out.push_back(check_bandwidth_contraction("contraction/0.25", wide, 0.25));
  return out;
}

std::vector<CheckVerdict> model_suite(const HcInrModel& model, const FeaturePyramid& pyramid, bool expect_identity) {
  std::vector<CheckVerdict> out;
  const Tensor grid = pixel_grid(128, 128);
  const Tensor features = model.warp.levels.empty() ? Tensor::zeros({grid.rows(), 1}) : local_features(pyramid, grid);
  const CoordinateMap map = model_warp_map(model, pyramid);
  const JacobianReport report = jacobian_report(map, grid);

  CheckVerdict lip;
  lip.name = "model/lipschitz";
  lip.measured = lipschitz_estimate(report);
  if (expect_identity) {
    lip.expected = 1.0;
    lip.tolerance = 1e-9;
    lip.passed = std::abs(lip.measured - 1.0) <= 1e-9;
  } else {
    lip.expected = lip.measured;
    lip.passed = std::isfinite(lip.measured);
  }
  out.push_back(lip);

  if (!model.warp.levels.empty()) out.push_back(check_composition("model/composition", model.warp, grid, features));

  CheckVerdict fold;
  fold.name = "model/folding";
  fold.measured = report.folding_fraction;
  fold.expected = 0.0;
  fold.passed = report.folding_fraction == 0.0;
  fold.details["grid_points"] = grid.rows();
  out.push_back(fold);

  // Pointwise inverse-Jacobian factor of the effective bandwidth.
  CheckVerdict bw;
  bw.name = "model/inverse-jacobian-factor";
  double worst = 0.0, mean = 0.0;
  std::size_t singular = 0;
  for (const auto& j : report.matrices) {
    try {
      const double f = spectral_norm(inverse_jacobian(j).transpose());
      worst = std::max(worst, f);
      mean += f;
    } catch (const SingularJacobianError&) {
      ++singular;
    }
  }
  const std::size_t regular = report.matrices.size() - singular;
  bw.measured = worst;
  bw.expected = expect_identity ? 1.0 : worst;
  bw.tolerance = expect_identity ? 1e-9 : 0.0;
  bw.passed = singular == 0 && (!expect_identity || std::abs(worst - 1.0) <= 1e-9);
  bw.details = {{"mean", regular ? mean / static_cast<double>(regular) : 0.0}, {"singular_points", singular}};
  out.push_back(bw);
  return out;
}

}  // namespace hcinr
