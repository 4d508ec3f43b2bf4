#include "doctest.h"
#include "helpers.hpp"

#include "hcinr/features.hpp"

#include <random>

using namespace hcinr;

namespace {

Grid2D random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid2D g(rows, cols);
  for (double& v : g.values) v = u(rng);
  return g;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("pixel centre convention round trips") {
  for (std::size_t n : {2u, 3u, 16u, 64u, 127u}) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pixel_to_coord(i, n);
      CHECK(x > -1.0);
      CHECK(x < 1.0);
      CHECK(std::llround(coord_to_pixel(x, n)) == static_cast<long long>(i));
      CHECK(std::abs(coord_to_pixel(x, n) - static_cast<double>(i)) < 1e-12);
    }
  }
  CHECK(pixel_to_coord(0, 4) == -0.75);
}

TEST_CASE("constant image has all-zero maps and features") {
  const FeaturePyramid p = build_feature_pyramid(Grid2D(8, 8, 0.4));
  REQUIRE(p.scale_count() == 3);
  for (const auto& m : p.maps)
    for (double v : m.values) CHECK(v == 0.0);
  for (double v : local_features(p, 0.13, -0.71)) CHECK(v == 0.0);
}

TEST_CASE("vertical step edge peaks on the two columns beside it") {
  const std::size_t c = 5;
  Grid2D g(9, 12);
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t j = c; j < g.cols; ++j) g(i, j) = 1.0;
  const FeaturePyramid p = build_feature_pyramid(g);
  const Grid2D& m = p.maps[0];
  for (std::size_t i = 0; i < g.rows; ++i) {
    for (std::size_t j = 0; j < g.cols; ++j) {
      if (j == c - 1 || j == c)
        CHECK(m(i, j) == 1.0);
      else
        CHECK(m(i, j) < 1.0);
    }
  }
}

TEST_CASE("every map is normalized to max 0 or 1 and is non-negative") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeaturePyramid p = build_feature_pyramid(random_grid(16, 20, seed), {0, 1, 2, 4});
    CHECK(p.scale_count() == 4);
    for (const auto& m : p.maps) {
      const double peak = *std::max_element(m.values.begin(), m.values.end());
      CHECK((peak == 0.0 || peak == 1.0));
      for (double v : m.values) CHECK(v >= 0.0);
      CHECK(m.rows == 16);
      CHECK(m.cols == 20);
    }
  }
}

TEST_CASE("pixel-centre queries return the stored values") {
  const FeaturePyramid p = build_feature_pyramid(random_grid(10, 7, 3));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      const auto g = local_features(p, pixel_to_coord(j, 7), pixel_to_coord(i, 10));
      for (std::size_t s = 0; s < p.scale_count(); ++s) CHECK(std::abs(g[s] - p.maps[s](i, j)) < 1e-12);
    }
}

TEST_CASE("midpoint between two pixels is their average") {
  FeaturePyramid p;
  p.radii = {0};
  Grid2D m(4, 4);
  m(1, 1) = 0.2;
  m(1, 2) = 0.6;
  p.maps = {m};
  const double x1 = 0.5 * (pixel_to_coord(1, 4) + pixel_to_coord(2, 4));
  const auto g = local_features(p, x1, pixel_to_coord(1, 4));
  CHECK(std::abs(g[0] - 0.4) < 1e-15);
}

TEST_CASE("features stay in [0,1] and clamp outside the domain") {
  const FeaturePyramid p = build_feature_pyramid(random_grid(12, 12, 4));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 500; ++k) {
    for (double v : local_features(p, u(rng), u(rng))) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto corner = local_features(p, 5.0, -5.0);
  const auto edge = local_features(p, pixel_to_coord(11, 12), pixel_to_coord(0, 12));
  for (std::size_t s = 0; s < corner.size(); ++s) {
    CHECK(std::abs(corner[s] - edge[s]) < 1e-15);
    CHECK(std::abs(corner[s] - p.maps[s](0, 11)) < 1e-15);
  }
}

TEST_CASE("bilinear lookup is Lipschitz with the adjacent-cell constant") {
  const std::size_t n = 16;
  const FeaturePyramid p = build_feature_pyramid(random_grid(n, n, 5));
  const double cell = 2.0 / static_cast<double>(n);
  std::vector<double> constant(p.scale_count(), 0.0);
  for (std::size_t s = 0; s < p.scale_count(); ++s) {
    const Grid2D& m = p.maps[s];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (j + 1 < n) constant[s] = std::max(constant[s], std::abs(m(i, j + 1) - m(i, j)) / cell);
        if (i + 1 < n) constant[s] = std::max(constant[s], std::abs(m(i + 1, j) - m(i, j)) / cell);
      }
  }
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    const double a1 = u(rng), a2 = u(rng), b1 = u(rng), b2 = u(rng);
    const auto ga = local_features(p, a1, a2);
    const auto gb = local_features(p, b1, b2);
    const double dist = std::abs(a1 - b1) + std::abs(a2 - b2);
    for (std::size_t s = 0; s < ga.size(); ++s) CHECK(std::abs(ga[s] - gb[s]) <= constant[s] * dist + 1e-12);
  }
}

TEST_CASE("batched lookup agrees with the scalar lookup") {
  const FeaturePyramid p = build_feature_pyramid(random_grid(8, 8, 7));
  std::mt19937_64 rng(7);
  const Tensor coords = testing::random_tensor(rng, {20, 2});
  const Tensor g = local_features(p, coords);
  REQUIRE(g.shape() == Shape{20, 3});
  CHECK_FALSE(g.on_tape());
  for (std::size_t r = 0; r < 20; ++r) {
    const auto ref = local_features(p, coords.at(r, 0), coords.at(r, 1));
    for (std::size_t s = 0; s < 3; ++s) CHECK(g.at(r, s) == ref[s]);
  }
}

TEST_CASE("degenerate grids are rejected") {
  CHECK_THROWS_AS(build_feature_pyramid(Grid2D(2, 8)), std::invalid_argument);
  CHECK_THROWS_AS(build_feature_pyramid(Grid2D(8, 8), {}), std::invalid_argument);
}

}  // TEST_SUITE
