#include "hcinr/warp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>

namespace hcinr {

std::string to_string(DisplacementMode m) { return m == DisplacementMode::kBounded ? "bounded" : "linear"; }

std::string to_string(PenaltyMode m) { return m == PenaltyMode::kDeviation ? "deviation" : "literal"; }

PenaltyMode penalty_mode_from_string(const std::string& s) {
  if (s == "deviation") return PenaltyMode::kDeviation;
  if (s == "literal") return PenaltyMode::kLiteral;
  throw std::invalid_argument("unknown penalty mode '" + s + "' (expected deviation|literal)");
}

Tensor displacement_directions(std::size_t dim) {
  std::vector<std::vector<double>> dirs;
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> e(dim, 0.0);
    e[i] = 1.0;
    dirs.push_back(e);
  }
  const double h = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i + 1; j < dim; ++j) {
      std::vector<double> plus(dim, 0.0), minus(dim, 0.0);
      plus[i] = h;
      plus[j] = h;
      minus[i] = h;
      minus[j] = -h;
      dirs.push_back(plus);
      dirs.push_back(minus);
    }
  }
  const std::size_t f = dirs.size();
  std::vector<double> m(dim * f);
  for (std::size_t k = 0; k < f; ++k)
    for (std::size_t i = 0; i < dim; ++i) m[i * f + k] = dirs[k][i];
  return Tensor::matrix(dim, f, std::move(m));
}

double default_amplitude(std::size_t level_index) {
  return 0.3 / std::ldexp(1.0, static_cast<int>(level_index) - 1);
}

std::size_t WarpLevel::warp_param_count() const {
  return dim * dim + dim + dim * atom_count() + atom_count();
}

double WarpLevel::base_frequency() const {
  return std::ldexp(std::numbers::pi, static_cast<int>(index) - 1);
}

std::size_t WarpStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : levels)
    n += l.hyper_hidden.weight.numel() + l.hyper_hidden.bias.numel() + l.hyper_out.weight.numel() +
         l.hyper_out.bias.numel();
  return n;
}

WarpStack init_warp_stack(const WarpStackConfig& config, std::uint64_t seed) {
  if (config.dim < 1) throw std::invalid_argument("warp: dimension must be >= 1");
  if (config.levels > 0 && (config.feature_dim < 1 || config.hyper_hidden < 1))
    throw std::invalid_argument("warp: hypernetwork needs feature and hidden widths >= 1");
  if (!config.amplitudes.empty() && config.amplitudes.size() != config.levels)
    throw std::invalid_argument("warp: amplitude list must have one entry per level");

  std::mt19937_64 rng(seed);
  WarpStack stack;
  stack.dim = config.dim;
  for (std::size_t l = 1; l <= config.levels; ++l) {
    WarpLevel level;
    level.index = l;
    level.dim = config.dim;
    level.amplitude = config.amplitudes.empty() ? default_amplitude(l) : config.amplitudes[l - 1];
    if (!(level.amplitude > 0.0)) throw std::invalid_argument("warp: amplitude cap must be positive");
    level.mode = config.mode;
    level.directions = displacement_directions(config.dim);
    level.film_width = config.film_width;

    const std::size_t in = config.feature_dim;
    const std::size_t hidden = config.hyper_hidden;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + hidden));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * hidden), b(hidden);
    for (double& v : w) v = dist(rng);
    for (double& v : b) v = dist(rng);
    level.hyper_hidden = {Tensor::matrix(in, hidden, std::move(w)), Tensor::vector(std::move(b))};
    const std::size_t out = level.output_count();
    level.hyper_out = {Tensor::zeros({hidden, out}), Tensor::zeros({out})};

    stack.levels.push_back(std::move(level));
    stack.penalty_weights.push_back(1e-3);
  }
  return stack;
}

WarpLevel make_fixed_level(std::size_t index, std::size_t dim, const std::vector<double>& phi,
                           DisplacementMode mode, double amplitude, std::size_t feature_dim) {
  WarpLevel level;
  level.index = index;
  level.dim = dim;
  level.mode = mode;
  level.amplitude = amplitude;
  level.directions = displacement_directions(dim);
  if (phi.size() != level.warp_param_count()) {
    throw std::invalid_argument("make_fixed_level: expected " + std::to_string(level.warp_param_count()) +
                                " parameters, got " + std::to_string(phi.size()));
  }
  level.hyper_hidden = {Tensor::zeros({feature_dim, 1}), Tensor::zeros({1})};
  level.hyper_out = {Tensor::zeros({1, phi.size()}), Tensor::vector(phi)};
  return level;
}

Tensor hyper_predict(const WarpLevel& level, const Tensor& features) {
  if (features.rank() != 2 || features.cols() != level.feature_dim()) {
    throw ShapeError("hyper_predict: expected [batch, " + std::to_string(level.feature_dim()) +
                     "] features, got " + shape_string(features.shape()));
  }
  const Tensor hidden = ad::tanh(
      ad::linear(features, level.hyper_hidden.weight, level.hyper_hidden.bias));
  return ad::linear(hidden, level.hyper_out.weight, level.hyper_out.bias);
}

namespace {

// Warp columns [A | b | c | p] of phi; extra trailing columns are ignored.
LevelParams split_warp_columns(const WarpLevel& level, const Tensor& phi) {
  const std::size_t d = level.dim;
  const std::size_t f = level.atom_count();
  LevelParams p;
  for (std::size_t i = 0; i < d; ++i) p.a_rows.push_back(ad::slice_cols(phi, i * d, d));
  const std::size_t b0 = d * d;
  for (std::size_t i = 0; i < d; ++i) p.offsets.push_back(ad::slice_cols(phi, b0 + i, 1));
  const std::size_t c0 = b0 + d;
  for (std::size_t i = 0; i < d; ++i) p.coeffs.push_back(ad::slice_cols(phi, c0 + i * f, f));
  p.phases = ad::slice_cols(phi, c0 + d * f, f);
  return p;
}

}  // namespace

LevelParams split_level_params(const WarpLevel& level, const Tensor& phi) {
  if (phi.rank() != 2 || phi.cols() != level.output_count())
    throw ShapeError("split_level_params: expected " + std::to_string(level.output_count()) +
                     " columns, got " + shape_string(phi.shape()));
  LevelParams p = split_warp_columns(level, phi);
  if (level.film_width > 0) {
    const std::size_t g0 = level.warp_param_count();
    p.film_gamma = ad::affine(ad::slice_cols(phi, g0, level.film_width), 1.0, 1.0);
    p.film_beta = ad::slice_cols(phi, g0 + level.film_width, level.film_width);
  }
  return p;
}

LevelParams predict_level_params(const WarpLevel& level, const Tensor& features) {
  if (features.rank() != 2 || features.cols() != level.feature_dim()) {
    throw ShapeError("predict_level_params: expected [batch, " + std::to_string(level.feature_dim()) +
                     "] features, got " + shape_string(features.shape()));
  }
  const Tensor hidden = ad::tanh(
      ad::linear(features, level.hyper_hidden.weight, level.hyper_hidden.bias));
  const Tensor& w = level.hyper_out.weight;
  const Tensor& b = level.hyper_out.bias;
  // Slicing the output layer rather than its [batch, outputs] result keeps
  // the per-sample tensors narrow.
  auto head = [&](std::size_t begin, std::size_t count, double shift) {
    Tensor bias = ad::segment(b, begin, {count});
    if (shift != 0.0) bias = ad::affine(bias, 1.0, shift);
    return ad::linear(hidden, ad::slice_cols(w, begin, count), bias);
  };
  const std::size_t wp = level.warp_param_count();
  LevelParams p = split_warp_columns(level, head(0, wp, 0.0));
  if (level.film_width > 0) {
    p.film_gamma = head(wp, level.film_width, 1.0);
    p.film_beta = head(wp + level.film_width, level.film_width, 0.0);
  }
  return p;
}

LevelEval warp_level_eval(const WarpLevel& level, const Tensor& x, const LevelParams& params) {
  const std::size_t d = level.dim;
  if (x.rank() != 2 || x.cols() != d)
    throw ShapeError("warp_level_apply: expected [batch, " + std::to_string(d) + "] input, got " +
                     shape_string(x.shape()));
  const std::size_t f = level.atom_count();
  const Tensor row_sum_d = Tensor::full({d, 1}, 1.0);
  const Tensor row_sum_f = Tensor::full({f, 1}, 1.0);

  const Tensor phase = ad::add(ad::scale(ad::matmul(x, level.directions), level.base_frequency()),
                               params.phases);
  const Tensor atoms = ad::sin(phase);

  std::vector<Tensor> u_cols;
  for (std::size_t i = 0; i < d; ++i) {
    const Tensor ax = ad::matmul(ad::mul(params.a_rows[i], x), row_sum_d);
    const Tensor wave = ad::matmul(ad::mul(params.coeffs[i], atoms), row_sum_f);
    u_cols.push_back(ad::add(ad::add(ax, params.offsets[i]), wave));
  }
  const Tensor u = ad::concat_cols(u_cols);

  LevelEval eval;
  eval.cos_phase = ad::cos(phase);
  if (level.mode == DisplacementMode::kLinear) {
    eval.output = ad::add(x, u);
  } else {
    eval.squashed = ad::tanh(u);
    eval.output = ad::add(x, ad::scale(eval.squashed, level.amplitude));
  }
  return eval;
}

Tensor warp_level_apply(const WarpLevel& level, const Tensor& x, const LevelParams& params) {
  return warp_level_eval(level, x, params).output;
}

std::vector<Tensor> level_jacobian_deviation(const WarpLevel& level,
                                             const LevelParams& params, const LevelEval& eval) {
  const std::size_t d = level.dim;
  const std::size_t f = level.atom_count();
  std::vector<double> dir_t(f * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < f; ++k) dir_t[k * d + i] = level.directions.at(i, k);
  const Tensor directions_t = Tensor::matrix(f, d, std::move(dir_t));
  const Tensor spread = Tensor::full({1, d}, 1.0);

  std::vector<Tensor> rows;
  for (std::size_t i = 0; i < d; ++i) {
    // du_i/dx = A_i + omega * sum_f c_{f,i} cos(phase_f) k_f^T
    const Tensor wave = ad::matmul(ad::mul(params.coeffs[i], eval.cos_phase), directions_t);
    Tensor du = ad::add(params.a_rows[i], ad::scale(wave, level.base_frequency()));
    if (level.mode == DisplacementMode::kBounded) {
      const Tensor squashed_i = ad::slice_cols(eval.squashed, i, 1);
      const Tensor slope = ad::affine(ad::square(squashed_i), -level.amplitude, level.amplitude);
      du = ad::mul(ad::matmul(slope, spread), du);
    }
    rows.push_back(du);
  }
  return rows;
}

StackForward warp_stack_forward(const WarpStack& stack, const Tensor& x, const Tensor& features) {
  StackForward fw;
  fw.intermediates.push_back(x);
  for (const WarpLevel& level : stack.levels) {
    LevelParams params = predict_level_params(level, features);
    LevelEval eval = warp_level_eval(level, fw.intermediates.back(), params);
    fw.intermediates.push_back(eval.output);
    fw.params.push_back(std::move(params));
    fw.evals.push_back(std::move(eval));
  }
  return fw;
}

Tensor warp_stack_apply(const WarpStack& stack, const Tensor& x, const Tensor& features) {
  return warp_stack_forward(stack, x, features).output();
}

Tensor jacobian_penalty(const WarpStack& stack, const StackForward& forward, PenaltyMode mode) {
  if (stack.penalty_weights.size() != stack.levels.size())
    throw std::invalid_argument("jacobian_penalty: one weight per level required");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < stack.levels.size(); ++l) {
    const WarpLevel& level = stack.levels[l];
    const Tensor& input = forward.intermediates[l];
    const std::vector<Tensor> rows =
        level_jacobian_deviation(level, forward.params[l], forward.evals[l]);
    Tensor level_sum = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Tensor row = rows[i];
      if (mode == PenaltyMode::kLiteral) {
        std::vector<double> e(input.rows() * level.dim, 0.0);
        for (std::size_t b = 0; b < input.rows(); ++b) e[b * level.dim + i] = 1.0;
        row = ad::add(row, Tensor::matrix(input.rows(), level.dim, std::move(e)));
      }
      level_sum = ad::add(level_sum, ad::sum(ad::square(row)));
    }
    const double weight = stack.penalty_weights[l] / static_cast<double>(input.rows());
    total = ad::add(total, ad::scale(level_sum, weight));
  }
  return total;
}

Tensor jacobian_penalty(const WarpStack& stack, const Tensor& x, const Tensor& features, PenaltyMode mode) {
  return jacobian_penalty(stack, warp_stack_forward(stack, x, features), mode);
}

// ---------------------------------------------------------------------------

std::vector<Eigen::MatrixXd> jacobians(const CoordinateMap& map, const Tensor& points) {
  if (points.rank() != 2) throw ShapeError("jacobians: expected [batch, d] points");
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  std::vector<Eigen::MatrixXd> out(n, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                                             static_cast<Eigen::Index>(d)));
  Tape tape;
  const Tensor x = tape.watch(points);
  const Tensor z = map(x);
  if (z.rank() != 2 || z.rows() != n || z.cols() != d)
    throw ShapeError("jacobians: map must return [batch, d], got " + shape_string(z.shape()));
  for (std::size_t j = 0; j < d; ++j) {
    const Tensor grad = tape.backward(ad::sum(ad::slice_cols(z, j, 1))).of(x);
    const auto g = grad.values();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t k = 0; k < d; ++k)
        out[b](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = g[b * d + k];
  }
  return out;
}

Eigen::MatrixXd jacobian_at(const CoordinateMap& map, const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("jacobian_at: non-finite coordinate");
  return jacobians(map, Tensor::matrix(1, x.size(), x)).front();
}

Eigen::MatrixXd finite_difference_jacobian(const CoordinateMap& map, const std::vector<double>& x,
                                           double step) {
  const std::size_t d = x.size();
  Eigen::MatrixXd j(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> plus = x, minus = x;
    plus[k] += step;
    minus[k] -= step;
    const Tensor zp = map(Tensor::matrix(1, d, plus));
    const Tensor zm = map(Tensor::matrix(1, d, minus));
    for (std::size_t i = 0; i < d; ++i)
      j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (zp[i] - zm[i]) / (2.0 * step);
  }
  return j;
}

Eigen::MatrixXd inverse_jacobian(const Eigen::MatrixXd& j) {
  const double det = j.determinant();
  if (!(std::abs(det) >= 1e-12))
    throw SingularJacobianError("inverse_jacobian: |det J| = " + std::to_string(std::abs(det)) +
                                " is below 1e-12");
  return j.inverse();
}

double spectral_norm(const Eigen::MatrixXd& j) {
  if (j.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
  return svd.singularValues()(0);
}

JacobianReport jacobian_report(const CoordinateMap& map, const Tensor& points) {
  JacobianReport r;
  r.samples = points.detach();
  r.matrices = jacobians(map, points);
  std::size_t folded = 0;
  for (const auto& j : r.matrices) {
    const double det = j.determinant();
    r.determinants.push_back(det);
    r.spectral_norms.push_back(spectral_norm(j));
    if (det <= 0.0) ++folded;
  }
  r.folding_fraction = r.matrices.empty() ? 0.0
                                          : static_cast<double>(folded) / static_cast<double>(r.matrices.size());
  return r;
}

double lipschitz_estimate(const JacobianReport& report) {
  if (report.spectral_norms.empty()) throw std::invalid_argument("lipschitz_estimate: no samples");
  return *std::max_element(report.spectral_norms.begin(), report.spectral_norms.end());
}

double lipschitz_estimate(const CoordinateMap& map, const Tensor& points) {
  return lipschitz_estimate(jacobian_report(map, points));
}

double composition_bound(const std::vector<double>& level_constants) {
  double product = 1.0;
  for (double c : level_constants) {
    if (!(c >= 0.0)) throw std::invalid_argument("composition_bound: Lipschitz constants must be >= 0");
    product *= c;
  }
  return product;
}

double folding_fraction(const CoordinateMap& map, const Tensor& points) {
  if (points.rank() != 2 || points.rows() == 0) throw std::invalid_argument("folding_fraction: empty grid");
  return jacobian_report(map, points).folding_fraction;
}

Tensor lattice_points(std::size_t dim, std::size_t n, double lo, double hi) {
  if (n < 2) throw std::invalid_argument("lattice_points: need at least 2 points per axis");
  std::size_t total = 1;
  for (std::size_t i = 0; i < dim; ++i) total *= n;
  std::vector<double> v(total * dim);
  for (std::size_t p = 0; p < total; ++p) {
    std::size_t rem = p;
    // Last axis varies fastest.
    for (std::size_t i = dim; i-- > 0;) {
      const std::size_t k = rem % n;
      rem /= n;
      v[p * dim + i] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    }
  }
  return Tensor::matrix(total, dim, std::move(v));
}

CoordinateMap affine_map(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const auto d = static_cast<std::size_t>(a.rows());
  std::vector<double> at(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k)
      at[k * d + i] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  const Tensor a_t = Tensor::matrix(d, d, std::move(at));
  const Tensor bias = Tensor::vector(std::vector<double>(b.data(), b.data() + b.size()));
  return [a_t, bias](const Tensor& x) { return ad::linear(x, a_t, bias); };
}

CoordinateMap sine_warp_1d(double amplitude) {
  return [amplitude](const Tensor& x) {
    return ad::add(x, ad::scale(ad::sin(ad::scale(x, std::numbers::pi)), amplitude));
  };
}

CoordinateMap stack_map(const WarpStack& stack, std::function<Tensor(const Tensor&)> features_of) {
  return [&stack, features_of = std::move(features_of)](const Tensor& x) {
    return warp_stack_apply(stack, x, features_of(x.detach()));
  };
}

CoordinateMap level_map(const WarpStack& stack, std::size_t index, const Tensor& features) {
  const WarpLevel& level = stack.levels.at(index);
  const LevelParams params = predict_level_params(level, features.detach());
  return [&level, params](const Tensor& x) { return warp_level_apply(level, x, params); };
}

void write_jacobian_csv(const JacobianReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::size_t d = report.samples.cols();
  for (std::size_t i = 0; i < d; ++i) out << 'x' << (i + 1) << ',';
  out << "det,spectral_norm\n";
  out << std::setprecision(17);
  for (std::size_t b = 0; b < report.matrices.size(); ++b) {
    for (std::size_t i = 0; i < d; ++i) out << report.samples.at(b, i) << ',';
    out << report.determinants[b] << ',' << report.spectral_norms[b] << '\n';
  }
}

}  // namespace hcinr
