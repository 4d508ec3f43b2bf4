#pragma once

// Fitting targets: images, synthetic patterns and analytic 2D signed distance
// fields, all sampled on the shared pixel-centre convention over [-1,1]^2.

#include "hcinr/features.hpp"
#include "hcinr/image.hpp"
#include "hcinr/spectral.hpp"
#include "hcinr/tensor.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hcinr {

// ---------------------------------------------------------------------------
// Synthetic signals

enum class SyntheticKind { kCheckerboard, kRadialChirp, kGaussianBumps };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kCheckerboard;
  std::size_t resolution = 64;  // power of two
  std::size_t cells = 8;        // checkerboard cells per side
  // Radial chirp: instantaneous frequency (cycles per unit) ramps linearly
  // from omega_min at the centre to omega_max at half a period out.
  double omega_min = 2.0;
  double omega_max = 24.0;
  std::size_t count = 4;  // gaussian bumps
  double sigma = 0.25;    // bump width in [-1,1] coordinates
  std::uint64_t seed = 0;

  void validate() const;
};

// Checkerboard cell (0,0) is 0. The chirp is sampled on the unit torus
// (x = j / n) so its spectrum has no wrap-around discontinuity, then
// low-passed at radius omega_max and rescaled to [0, 1]. Bump centres
// sit on pixel centres, and overlapping bumps combine by maximum.
Grid2D make_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Analytic signed distance fields

struct SdfShape {
  enum class Kind { kCircle, kBox, kUnion, kDifference };
  Kind kind = Kind::kCircle;
  std::array<double, 2> center = {0.0, 0.0};
  double radius = 0.5;
  std::array<double, 2> half_extents = {0.3, 0.3};
  std::vector<SdfShape> children;  // union: any count, difference: a minus the rest

  static SdfShape circle(double cx, double cy, double r);
  static SdfShape box(double cx, double cy, double hx, double hy);
  static SdfShape make_union(std::vector<SdfShape> parts);
  static SdfShape difference(SdfShape a, SdfShape b);

  std::size_t primitive_count() const;
  void validate() const;
};

// Exact for primitives; union (min) and difference (max(a, -b)) give the
// usual bound rather than the true distance.
double analytic_sdf(const SdfShape& shape, double x1, double x2);

// Circle SDF through tape ops, for derivative checks: [B,2] -> [B,1].
Tensor circle_sdf_field(const SdfShape& circle, const Tensor& coords);

// ---------------------------------------------------------------------------
// Tasks

struct ImageTask {
  Image image;
  std::string source;
};

ImageTask load_image(const std::string& path);

struct Sdf2DTask {
  SdfShape shape;
  std::size_t raster_resolution = 64;
  // Training pool: the uniform raster plus near-boundary samples, 4 uniform
  // to 1 near, jittered within `band` of the zero level set.
  double band = 0.05;
  std::uint64_t seed = 0;

  Grid2D raster() const;
};

// Resolved training target. The first grid_rows * grid_cols entries of
// `coords` are the full evaluation grid in raster order; SDF tasks append
// extra near-boundary samples after them.
struct FitTarget {
  std::string name;
  bool is_sdf = false;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t channels = 1;
  Tensor coords;    // [N, 2]
  Tensor values;    // [N, channels]
  Tensor features;  // [N, scales]
  FeaturePyramid pyramid;
  SdfShape shape;   // SDF tasks only

  std::size_t grid_size() const { return grid_rows * grid_cols; }
  std::size_t sample_count() const { return coords.rows(); }
  // Stable hash of coordinates and values.
  std::string hash() const;
  Image grid_image(const Tensor& predictions) const;
};

FitTarget make_image_target(const Image& image, const std::string& name,
                            const std::vector<std::size_t>& radii = kDefaultFeatureRadii);
FitTarget make_sdf_target(const Sdf2DTask& task, const std::string& name,
                          const std::vector<std::size_t>& radii = kDefaultFeatureRadii);

// Task specs accepted on the command line:
//   bundled:texture64              the shipped 64x64 texture
//   image:<path>                   any PGM/PNG
//   checkerboard:<res>:<cells>
//   chirp:<res>:<omega_min>:<omega_max>
//   bumps:<res>:<count>:<sigma>:<seed>
//   sdf:circle[:<res>]             circle r = 0.5 at the origin
//   sdf:box[:<res>]                box with half extents 0.4 x 0.25
//   sdf:union[:<res>]              two overlapping circles minus a small box
FitTarget resolve_task(const std::string& spec);

std::string bundled_path(const std::string& file);

// Tones read from a JSON document {"tones":[{"k1":..,"k2":..,"amplitude":..,"phase":..}]}.
BandLimitedSignal load_tones(const std::string& path);
BandLimitedSignal bundled_two_tone();

// Field dump: uint64 LE header length, JSON header, then float64 LE values.
void write_field_dump(const std::string& path, std::size_t rows, std::size_t cols,
                      const std::vector<double>& values, const std::string& description);
std::vector<double> read_field_dump(const std::string& path, std::size_t& rows, std::size_t& cols);

}  // namespace hcinr
