#include "doctest.h"
#include "helpers.hpp"

#include "hcinr/spectral.hpp"
#include "hcinr/tasks.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

using namespace hcinr;

namespace {

Grid2D random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Grid2D g(rows, cols);
  for (double& v : g.values) v = n(rng);
  return g;
}

double grid_energy(const Grid2D& g) {
  double e = 0.0;
  for (double v : g.values) e += v * v;
  return e;
}

// sin(2 pi k x1) as a cosine tone.
BandLimitedSignal sine_along_x1(int k) { return {{{k, 0, 1.0, -std::numbers::pi / 2}}}; }

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("FFT matches a direct DFT") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t len : {1u, 2u, 8u, 32u}) {
    std::vector<std::complex<double>> x(len);
    for (auto& v : x) v = {n(rng), n(rng)};
    auto fast = x;
    fft_inplace(fast, false);
    for (std::size_t k = 0; k < len; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < len; ++j)
        acc += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(len));
      CHECK(std::abs(fast[k] - acc) < 1e-11);
    }
  }
  std::vector<std::complex<double>> bad(6);
  CHECK_THROWS_AS(fft_inplace(bad, false), std::invalid_argument);
}

TEST_CASE("constant grid has a single DC coefficient") {
  const double c = 0.7;
  const std::size_t n = 16;
  const Spectrum s = dft2(Grid2D(n, n, c));
  CHECK(std::abs(s.at(0, 0)) == doctest::Approx(c * static_cast<double>(n)).epsilon(1e-14));
  for (std::size_t i = 0; i < s.coeffs.size(); ++i)
    if (i) CHECK(std::abs(s.coeffs[i]) < 1e-12);
  CHECK(radial_bandwidth(s) == 0.0);
}

TEST_CASE("a pure sinusoid concentrates on two conjugate bins") {
  const Spectrum s = dft2(sine_along_x1(4).rasterize(64));
  const double total = s.energy();
  const double at_bins = std::norm(s.at(0, frequency_bin(4, 64))) + std::norm(s.at(0, frequency_bin(-4, 64)));
  CHECK(at_bins / total == doctest::Approx(1.0).epsilon(1e-12));
  for (double p : {0.1, 0.5, 0.99, 0.999}) CHECK(radial_bandwidth(s, p) == doctest::Approx(4.0));
}

TEST_CASE("inverse DFT round trip and Parseval on random grids") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t rows = seed % 2 ? 32 : 16;
    const Grid2D g = random_grid(rows, 64, seed);
    const Spectrum s = dft2(g);
    CHECK(testing::max_abs_diff(idft2(s).values, g.values) < 1e-10);
    CHECK(s.energy() == doctest::Approx(grid_energy(g)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(dft2(Grid2D(12, 16)), std::invalid_argument);
}

TEST_CASE("signed frequencies round trip through bins") {
  for (std::size_t m = 0; m < 16; ++m) CHECK(frequency_bin(signed_frequency(m, 16), 16) == m);
  CHECK(signed_frequency(15, 16) == -1);
  CHECK(signed_frequency(7, 16) == 7);
}

TEST_CASE("radial bandwidth of two equal-energy tones at 2 and 8 is 8") {
  const BandLimitedSignal s{{{2, 0, 1.0, 0.0}, {8, 0, 1.0, 0.0}}};
  CHECK(radial_bandwidth(dft2(s.rasterize(64)), 0.99) == doctest::Approx(8.0));
  CHECK(radial_bandwidth(dft2(s.rasterize(64)), 0.4) == doctest::Approx(2.0));
  CHECK_THROWS(radial_bandwidth(dft2(s.rasterize(64)), 1.0));
}

TEST_CASE("radial bandwidth is monotone in the energy fraction") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Spectrum s = dft2(random_grid(32, 32, seed));
    double previous = 0.0;
    for (double p = 0.05; p < 1.0; p += 0.05) {
      const double r = radial_bandwidth(s, p);
      CHECK(r >= previous);
      previous = r;
    }
  }
}

TEST_CASE("effective bandwidth examples") {
  CHECK(effective_bandwidth(1.0, 10.0) == 10.0);
  CHECK(effective_bandwidth(0.5, 10.0) == 5.0);
  CHECK(effective_bandwidth(2.0, 3.0) == 6.0);
  CHECK_THROWS(effective_bandwidth(-1.0, 3.0));

  Eigen::MatrixXd j(2, 2);
  j << 2.0, 0.0, 0.0, 4.0;
  // ||J^-T||_2 = 1/2 for diag(2, 4).
  const auto field = effective_bandwidth_field({j}, 10.0);
  CHECK(field.at(0) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("affine change of variables") {
  const BandLimitedSignal two = bundled_two_tone();
  CHECK(affine_cov_check(two, Eigen::Matrix2d::Identity()).max_relative_error < 1e-9);

  const CovCheckResult doubled = affine_cov_check(sine_along_x1(4), 0.5 * Eigen::Matrix2d::Identity());
  CHECK(std::hypot(doubled.peak_k1, doubled.peak_k2) == doctest::Approx(8.0));

  Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  a(0, 0) = 2.0;
  const CovCheckResult r = affine_cov_check(two, a);
  CHECK(r.max_relative_error < 1e-6);
  CHECK(r.compared_bins > 0);

  Eigen::Matrix2d squash = Eigen::Matrix2d::Identity();
  squash(0, 0) = 0.1;
  CHECK_THROWS_AS(affine_cov_check(two, squash), NyquistError);
}

TEST_CASE("warped tones land where the inverse-transpose map predicts") {
  // s(A^-1 x) moves the tone k to A^-T k; with A = diag(2, 1) the tone (4, 2)
  // lands on (2, 2).
  const BandLimitedSignal one{{{4, 2, 1.0, 0.3}}};
  Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  a(0, 0) = 2.0;
  const Grid2D warped = one.rasterize_resampled(64, a.inverse());
  const Spectrum s = dft2(warped);
  const double total = s.energy();
  const double at = std::norm(s.at(frequency_bin(2, 64), frequency_bin(2, 64))) +
                    std::norm(s.at(frequency_bin(-2, 64), frequency_bin(-2, 64)));
  CHECK(at / total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bandwidth contracts under coordinate scaling") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    BandLimitedSignal s;
    std::uniform_int_distribution<int> f(-12, 12);
    std::uniform_real_distribution<double> amp(0.2, 1.0), ph(0.0, 6.28);
    // Even frequencies so s(x/2) stays on the integer lattice; multiples of 4 for s(x/4).
    for (int k = 0; k < 5; ++k) s.tones.push_back({4 * (f(rng) / 4), 4 * (f(rng) / 4), amp(rng), ph(rng)});
    const double base = radial_bandwidth(dft2(s.rasterize(128)));
    for (double scale : {0.5, 0.25}) {
      const Grid2D warped = s.rasterize_resampled(128, scale * Eigen::Matrix2d::Identity());
      CHECK(radial_bandwidth(dft2(warped)) <= scale * base + 1.0);
    }
  }
}

}  // TEST_SUITE
