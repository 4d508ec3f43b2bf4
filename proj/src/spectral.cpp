#include "hcinr/spectral.hpp"

#include "hcinr/warp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace hcinr {

double Spectrum::energy() const {
  double e = 0.0;
  for (const auto& c : coeffs) e += std::norm(c);
  return e;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles from the exact angle rather than a running product.
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      const std::complex<double> w(std::cos(angle), std::sin(angle));
      for (std::size_t start = 0; start < n; start += len) {
        const std::complex<double> u = data[start + k];
        const std::complex<double> v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

namespace {

void transform2(std::vector<std::complex<double>>& data, std::size_t rows, std::size_t cols, bool inverse) {
  std::vector<std::complex<double>> line(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, line.begin());
    fft_inplace(line, inverse);
    std::copy(line.begin(), line.end(), data.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  line.resize(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) line[r] = data[r * cols + c];
    fft_inplace(line, inverse);
    for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = line[r];
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  for (auto& v : data) v *= norm;
}

void require_fft_extents(std::size_t rows, std::size_t cols) {
  if (rows < 2 || cols < 2 || !is_power_of_two(rows) || !is_power_of_two(cols)) {
    throw std::invalid_argument("dft2: extents " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " must be powers of two >= 2");
  }
}

}  // namespace

Spectrum dft2(const Grid2D& signal) {
  require_fft_extents(signal.rows, signal.cols);
  Spectrum s{signal.rows, signal.cols, {}};
  s.coeffs.assign(signal.values.begin(), signal.values.end());
  transform2(s.coeffs, s.rows, s.cols, false);
  return s;
}

Grid2D idft2(const Spectrum& spectrum) {
  require_fft_extents(spectrum.rows, spectrum.cols);
  std::vector<std::complex<double>> data = spectrum.coeffs;
  transform2(data, spectrum.rows, spectrum.cols, true);
  Grid2D g(spectrum.rows, spectrum.cols);
  for (std::size_t i = 0; i < data.size(); ++i) g.values[i] = data[i].real();
  return g;
}

int signed_frequency(std::size_t m, std::size_t n) {
  const auto mi = static_cast<int>(m);
  const auto ni = static_cast<int>(n);
  return mi < ni / 2 ? mi : mi - ni;
}

std::size_t frequency_bin(int frequency, std::size_t n) {
  const auto ni = static_cast<int>(n);
  return static_cast<std::size_t>(((frequency % ni) + ni) % ni);
}

double radial_bandwidth(const Spectrum& spectrum, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("radial_bandwidth: energy fraction must lie in (0, 1)");
  std::vector<std::pair<double, double>> bins;  // (radius, energy)
  bins.reserve(spectrum.coeffs.size());
  double total = 0.0;
  for (std::size_t r = 0; r < spectrum.rows; ++r) {
    const double k2 = signed_frequency(r, spectrum.rows);
    for (std::size_t c = 0; c < spectrum.cols; ++c) {
      const double k1 = signed_frequency(c, spectrum.cols);
      const double e = std::norm(spectrum.at(r, c));
      bins.emplace_back(std::hypot(k1, k2), e);
      total += e;
    }
  }
  if (total <= 0.0) return 0.0;
  std::stable_sort(bins.begin(), bins.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const double target = fraction * total;
  double acc = 0.0;
  for (const auto& [radius, e] : bins) {
    acc += e;
    if (acc >= target) return radius;
  }
  return bins.back().first;
}

double effective_bandwidth(double inverse_jacobian_norm, double signal_bandwidth) {
  if (inverse_jacobian_norm < 0.0 || signal_bandwidth < 0.0)
    throw std::invalid_argument("effective_bandwidth: inputs must be non-negative");
  return inverse_jacobian_norm * signal_bandwidth;
}

std::vector<double> effective_bandwidth_field(const std::vector<Eigen::MatrixXd>& forward_jacobians,
                                              double signal_bandwidth) {
  std::vector<double> out;
  out.reserve(forward_jacobians.size());
  for (const auto& j : forward_jacobians)
    out.push_back(effective_bandwidth(spectral_norm(inverse_jacobian(j).transpose()), signal_bandwidth));
  return out;
}

double BandLimitedSignal::operator()(double x1, double x2) const {
  double v = 0.0;
  for (const Tone& t : tones)
    v += t.amplitude * std::cos(2.0 * std::numbers::pi * (t.k1 * x1 + t.k2 * x2) + t.phase);
  return v;
}

Grid2D BandLimitedSignal::rasterize(std::size_t n) const {
  return rasterize_resampled(n, Eigen::Matrix2d::Identity());
}

Grid2D BandLimitedSignal::rasterize_resampled(std::size_t n, const Eigen::Matrix2d& m) const {
  Grid2D g(n, n);
  const double step = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::Vector2d x(static_cast<double>(j) * step, static_cast<double>(i) * step);
      const Eigen::Vector2d y = m * x;
      g(i, j) = (*this)(y(0), y(1));
    }
  }
  return g;
}

CovCheckResult affine_cov_check(const BandLimitedSignal& signal, const Eigen::Matrix2d& a, std::size_t n) {
  if (!is_power_of_two(n) || n < 2) throw std::invalid_argument("affine_cov_check: grid size must be a power of two");
  if (std::abs(a.determinant()) < 1e-12) throw SingularJacobianError("affine_cov_check: A is singular");
  const Eigen::Matrix2d a_inv = a.inverse();
  const double nyquist = static_cast<double>(n) / 2.0;

  // A tone at k in s appears at A^-T k in s(A^-1 x).
  for (const Tone& t : signal.tones) {
    const Eigen::Vector2d k(t.k1, t.k2);
    const Eigen::Vector2d w = a_inv.transpose() * k;
    for (int i = 0; i < 2; ++i) {
      if (std::abs(k(i)) >= nyquist || std::abs(w(i)) >= nyquist) {
        throw NyquistError("affine_cov_check: tone (" + std::to_string(t.k1) + "," + std::to_string(t.k2) +
                           ") exceeds the Nyquist limit of a " + std::to_string(n) + " grid");
      }
      if (std::abs(w(i) - std::round(w(i))) > 1e-9) {
        throw NyquistError("affine_cov_check: tone (" + std::to_string(t.k1) + "," + std::to_string(t.k2) +
                           ") does not map onto an integer frequency");
      }
    }
  }

  const Spectrum original = dft2(signal.rasterize(n));
  const Spectrum warped = dft2(signal.rasterize_resampled(n, a_inv));

  double scale = 0.0;
  for (const auto& c : original.coeffs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) scale = 1.0;

  CovCheckResult result;
  double peak = -1.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Eigen::Vector2d w(signed_frequency(c, n), signed_frequency(r, n));
      const double mag = std::abs(warped.at(r, c));
      if (mag > peak + 1e-12) {
        peak = mag;
        result.peak_k1 = static_cast<int>(w(0));
        result.peak_k2 = static_cast<int>(w(1));
      }
      const Eigen::Vector2d q = a.transpose() * w;
      bool on_lattice = true;
      for (int i = 0; i < 2; ++i) {
        if (std::abs(q(i) - std::round(q(i))) > 1e-9 || std::round(q(i)) >= nyquist ||
            std::round(q(i)) < -nyquist)
          on_lattice = false;
      }
      if (!on_lattice) continue;
      // Over one period of the unit torus the |det| factor of the continuous
      // identity is cancelled by the measure of the preimage cell, so the
      // coefficients match one to one.
      const auto q1 = static_cast<int>(std::round(q(0)));
      const auto q2 = static_cast<int>(std::round(q(1)));
      const std::complex<double> predicted = original.at(frequency_bin(q2, n), frequency_bin(q1, n));
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(warped.at(r, c) - predicted) / scale);
      ++result.compared_bins;
    }
  }
  return result;
}

void write_spectrum_csv(const Spectrum& spectrum, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "omega1,omega2,magnitude\n" << std::setprecision(17);
  for (std::size_t r = 0; r < spectrum.rows; ++r)
    for (std::size_t c = 0; c < spectrum.cols; ++c)
      out << signed_frequency(c, spectrum.cols) << ',' << signed_frequency(r, spectrum.rows) << ','
          << std::abs(spectrum.at(r, c)) << '\n';
}

}  // namespace hcinr
