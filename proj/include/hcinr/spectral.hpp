#pragma once

// Discrete Fourier analysis on the unit periodic square [0,1)^2. A grid with
// N columns samples x1 = j / N, so DFT bin m corresponds to m cycles per unit
// (signed, m >= N/2 wraps to m - N).

#include "hcinr/features.hpp"

#include <Eigen/Core>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcinr {

struct Spectrum {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> coeffs;  // unitary normalization

  const std::complex<double>& at(std::size_t r, std::size_t c) const { return coeffs[r * cols + c]; }
  double energy() const;
};

bool is_power_of_two(std::size_t n);

// In-place radix-2 FFT of a power-of-two length sequence (no normalization).
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse);

Spectrum dft2(const Grid2D& signal);
Grid2D idft2(const Spectrum& spectrum);  // real part

// Signed frequency of bin m on an axis of length n.
int signed_frequency(std::size_t m, std::size_t n);
std::size_t frequency_bin(int frequency, std::size_t n);

// Smallest radius holding at least `fraction` of the spectral energy.
double radial_bandwidth(const Spectrum& spectrum, double fraction = 0.99);

double effective_bandwidth(double inverse_jacobian_norm, double signal_bandwidth);
// Pointwise ||J_{T^-1}(x)^T||_2 * bandwidth for every Jacobian in a report.
std::vector<double> effective_bandwidth_field(const std::vector<Eigen::MatrixXd>& forward_jacobians,
                                              double signal_bandwidth);

// Sum of cosine tones with integer frequency vectors (cycles per unit).
struct Tone {
  int k1 = 0;  // along x1 (columns)
  int k2 = 0;  // along x2 (rows)
  double amplitude = 1.0;
  double phase = 0.0;
};

struct BandLimitedSignal {
  std::vector<Tone> tones;

  double operator()(double x1, double x2) const;
  Grid2D rasterize(std::size_t n) const;
  // s(M x) sampled on the unit grid.
  Grid2D rasterize_resampled(std::size_t n, const Eigen::Matrix2d& m) const;
};

class NyquistError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CovCheckResult {
  double max_relative_error = 0.0;
  std::size_t compared_bins = 0;
  // Dominant bin of the warped signal, as signed frequencies.
  int peak_k1 = 0;
  int peak_k2 = 0;
};

// Checks the Fourier change of variables for T(x) = A x at desk scale: the
// warped signal s(A^-1 x) is resampled exactly from the generator and its
// DFT is compared with the coefficient of s at frequency A^T w, for every bin
// w where A^T w is an integer frequency inside the grid. Throws NyquistError
// when a warped tone would alias or fall off the integer lattice.
CovCheckResult affine_cov_check(const BandLimitedSignal& signal, const Eigen::Matrix2d& a,
                                std::size_t n = 64);

void write_spectrum_csv(const Spectrum& spectrum, const std::string& path);

}  // namespace hcinr
