#include "hcinr/metrics.hpp"

#include "hcinr/warp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace hcinr {

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("mse: size mismatch " + std::to_string(pred.size()) + " vs " +
                                std::to_string(target.size()));
  if (pred.empty()) throw std::invalid_argument("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

double psnr(std::span<const double> pred, std::span<const double> target) {
  const double m = mse(pred, target);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Grid2D& pred, const Grid2D& target) {
  constexpr std::size_t kWindow = 8;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (pred.rows != target.rows || pred.cols != target.cols)
    throw std::invalid_argument("ssim: grids differ in extent");
  // Images smaller than the window use a single full-size window.
  const std::size_t wr = std::min(kWindow, pred.rows);
  const std::size_t wc = std::min(kWindow, pred.cols);
  if (wr == 0 || wc == 0) throw std::invalid_argument("ssim: empty grid");
  const double count = static_cast<double>(wr * wc);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r0 = 0; r0 + wr <= pred.rows; ++r0) {
    for (std::size_t c0 = 0; c0 + wc <= pred.cols; ++c0) {
      double sx = 0.0, sy = 0.0;
      for (std::size_t i = r0; i < r0 + wr; ++i)
        for (std::size_t j = c0; j < c0 + wc; ++j) {
          sx += pred(i, j);
          sy += target(i, j);
        }
      const double mx = sx / count;
      const double my = sy / count;
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (std::size_t i = r0; i < r0 + wr; ++i)
        for (std::size_t j = c0; j < c0 + wc; ++j) {
          const double dx = pred(i, j) - mx;
          const double dy = target(i, j) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      vx /= count;
      vy /= count;
      cxy /= count;
      total += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double ssim(const Image& pred, const Image& target) {
  if (pred.channels != target.channels || pred.rows != target.rows || pred.cols != target.cols)
    throw std::invalid_argument("ssim: images differ in shape");
  double acc = 0.0;
  for (std::size_t ch = 0; ch < pred.channels; ++ch) acc += ssim(pred.channel(ch), target.channel(ch));
  return acc / static_cast<double>(pred.channels);
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<Point2> zero_level_set(const std::vector<double>& values, std::size_t n) {
  if (n < 2 || values.size() != n * n) throw std::invalid_argument("zero_level_set: values do not form an n x n lattice");
  auto coord = [n](std::size_t k) { return -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n - 1); };
  std::vector<Point2> points;
  auto edge = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
    const double f0 = values[i0 * n + j0];
    const double f1 = values[i1 * n + j1];
    if ((f0 < 0.0) == (f1 < 0.0)) return;
    const double t = f0 / (f0 - f1);
    points.push_back({coord(j0) + t * (coord(j1) - coord(j0)), coord(i0) + t * (coord(i1) - coord(i0))});
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j + 1 < n; ++j) edge(i, j, i, j + 1);
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = 0; j < n; ++j) edge(i, j, i + 1, j);
  return points;
}

namespace {

double one_sided(const std::vector<Point2>& from, const std::vector<Point2>& to) {
  double acc = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double dx = p[0] - q[0];
      const double dy = p[1] - q[1];
      best = std::min(best, dx * dx + dy * dy);
    }
    acc += best;
  }
  return acc / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: no zero crossing");
  return 0.5 * (one_sided(a, b) + one_sided(b, a));
}

double chamfer_2d(const ScalarField& field, const SdfShape& shape, std::size_t grid_res) {
  if (grid_res < 32) throw std::invalid_argument("chamfer_2d: grid resolution must be >= 32");
  // lattice_points varies its last axis fastest; put x2 first so rows run along x2.
  const Tensor lattice = lattice_points(2, grid_res);
  std::vector<double> swapped(lattice.numel());
  const auto lv = lattice.values();
  for (std::size_t p = 0; p < lattice.rows(); ++p) {
    swapped[2 * p] = lv[2 * p + 1];
    swapped[2 * p + 1] = lv[2 * p];
  }
  const Tensor points = Tensor::matrix(lattice.rows(), 2, swapped);
  const Tensor predicted = field(points);
  if (predicted.numel() != points.rows()) throw ShapeError("chamfer_2d: field must return one value per point");
  std::vector<double> exact(points.rows());
  for (std::size_t p = 0; p < points.rows(); ++p) exact[p] = analytic_sdf(shape, swapped[2 * p], swapped[2 * p + 1]);

  const std::vector<Point2> a = zero_level_set(predicted.to_vector(), grid_res);
  const std::vector<Point2> b = zero_level_set(exact, grid_res);
  if (a.empty()) throw std::invalid_argument("chamfer_2d: no zero crossing in the predicted field");
  if (b.empty()) throw std::invalid_argument("chamfer_2d: no zero crossing in the reference shape");
  return chamfer_distance(a, b);
}

double eikonal_residual(const ScalarField& field, const Tensor& samples) {
  if (samples.rank() != 2 || samples.cols() != 2 || samples.rows() == 0)
    throw ShapeError("eikonal_residual: expected non-empty [batch, 2] samples");
  Tape tape;
  const Tensor x = tape.watch(samples.detach());
  const Tensor f = field(x);
  if (f.numel() != samples.rows()) throw ShapeError("eikonal_residual: field must return one value per sample");
  // Samples are independent, so the gradient of the sum holds every per-sample gradient.
  const Tensor grad = tape.backward(ad::sum(f)).of(x);
  const auto g = grad.values();
  double acc = 0.0;
  for (std::size_t b = 0; b < samples.rows(); ++b)
    acc += std::abs(std::hypot(g[2 * b], g[2 * b + 1]) - 1.0);
  return acc / static_cast<double>(samples.rows());
}

void write_points_csv(const std::vector<Point2>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "x1,x2\n" << std::setprecision(17);
  for (const auto& p : points) out << p[0] << ',' << p[1] << '\n';
}

}  // namespace hcinr
