#include "hcinr/tasks.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace hcinr {

void SyntheticSpec::validate() const {
  if (!is_power_of_two(resolution) || resolution < 4)
    throw std::invalid_argument("synthetic signal: resolution must be a power of two >= 4, got " +
                                std::to_string(resolution));
  switch (kind) {
    case SyntheticKind::kCheckerboard:
      if (cells == 0 || resolution % cells != 0)
        throw std::invalid_argument("checkerboard: cell count must divide the resolution");
      break;
    case SyntheticKind::kRadialChirp:
      if (!(omega_min >= 0.0 && omega_max > omega_min))
        throw std::invalid_argument("radial chirp: need 0 <= omega_min < omega_max");
      if (omega_max >= static_cast<double>(resolution) / 2.0)
        throw std::invalid_argument("radial chirp: omega_max must stay below the Nyquist frequency");
      break;
    case SyntheticKind::kGaussianBumps:
      if (count == 0 || !(sigma > 0.0))
        throw std::invalid_argument("gaussian bumps: need count >= 1 and sigma > 0");
      break;
  }
}

Grid2D make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.resolution;
  Grid2D g(n, n);
  switch (spec.kind) {
    case SyntheticKind::kCheckerboard: {
      const std::size_t cell = n / spec.cells;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) = static_cast<double>((i / cell + j / cell) % 2);
      break;
    }
    case SyntheticKind::kRadialChirp: {
      // Phase is the integral of the instantaneous frequency along the
      // periodic distance to the centre of the unit square.
      const double span = 0.5;
      const double slope = (spec.omega_max - spec.omega_min) / span;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double dx = static_cast<double>(j) / static_cast<double>(n) - 0.5;
          const double dy = static_cast<double>(i) / static_cast<double>(n) - 0.5;
          const double r = std::hypot(dx, dy);
          const double ramp = std::min(r, span);
          double cycles = spec.omega_min * ramp + 0.5 * slope * ramp * ramp;
          if (r > span) cycles += spec.omega_max * (r - span);
          g(i, j) = std::cos(2.0 * std::numbers::pi * cycles);
        }
      }
      // The kink of the torus distance at the cell boundary leaks energy past
      // omega_max, so cut the spectrum there and rescale to [0, 1].
      Spectrum s = dft2(g);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          const auto k2 = static_cast<double>(signed_frequency(r, n));
          const auto k1 = static_cast<double>(signed_frequency(c, n));
          if (std::hypot(k1, k2) > spec.omega_max) s.coeffs[r * n + c] = 0.0;
        }
      g = idft2(s);
      const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
      const double min = *lo, range = *hi - *lo;
      for (double& v : g.values) v = (v - min) / range;
      break;
    }
    case SyntheticKind::kGaussianBumps: {
      std::mt19937_64 rng(spec.seed);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<std::array<double, 2>> centers;
      for (std::size_t b = 0; b < spec.count; ++b) {
        const std::size_t ci = pick(rng);
        const std::size_t cj = pick(rng);
        centers.push_back({pixel_to_coord(cj, n), pixel_to_coord(ci, n)});
      }
      const double denom = 2.0 * spec.sigma * spec.sigma;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double x1 = pixel_to_coord(j, n);
          const double x2 = pixel_to_coord(i, n);
          double v = 0.0;
          for (const auto& c : centers) {
            const double d2 = (x1 - c[0]) * (x1 - c[0]) + (x2 - c[1]) * (x2 - c[1]);
            v = std::max(v, std::exp(-d2 / denom));
          }
          g(i, j) = v;
        }
      }
      break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

SdfShape SdfShape::circle(double cx, double cy, double r) {
  SdfShape s;
  s.kind = Kind::kCircle;
  s.center = {cx, cy};
  s.radius = r;
  return s;
}

SdfShape SdfShape::box(double cx, double cy, double hx, double hy) {
  SdfShape s;
  s.kind = Kind::kBox;
  s.center = {cx, cy};
  s.half_extents = {hx, hy};
  return s;
}

SdfShape SdfShape::make_union(std::vector<SdfShape> parts) {
  SdfShape s;
  s.kind = Kind::kUnion;
  s.children = std::move(parts);
  return s;
}

SdfShape SdfShape::difference(SdfShape a, SdfShape b) {
  SdfShape s;
  s.kind = Kind::kDifference;
  s.children = {std::move(a), std::move(b)};
  return s;
}

std::size_t SdfShape::primitive_count() const {
  if (kind == Kind::kCircle || kind == Kind::kBox) return 1;
  std::size_t n = 0;
  for (const auto& c : children) n += c.primitive_count();
  return n;
}

void SdfShape::validate() const {
  switch (kind) {
    case Kind::kCircle:
      if (!(radius > 0.0)) throw std::invalid_argument("sdf circle: radius must be positive");
      break;
    case Kind::kBox:
      if (!(half_extents[0] > 0.0 && half_extents[1] > 0.0))
        throw std::invalid_argument("sdf box: half extents must be positive");
      break;
    case Kind::kUnion:
    case Kind::kDifference:
      if (children.size() < 2) throw std::invalid_argument("sdf: composite shapes need two or more parts");
      if (kind == Kind::kDifference && children.size() != 2)
        throw std::invalid_argument("sdf difference takes exactly two parts");
      for (const auto& c : children) c.validate();
      break;
  }
  if (primitive_count() > 4) throw std::invalid_argument("sdf: at most 4 primitives per shape");
  // Nonempty interior inside the domain: some lattice point must be inside.
  bool inside = false;
  for (int i = 0; i <= 64 && !inside; ++i)
    for (int j = 0; j <= 64 && !inside; ++j)
      inside = analytic_sdf(*this, -1.0 + j / 32.0, -1.0 + i / 32.0) < 0.0;
  if (!inside) throw std::invalid_argument("sdf: shape has no interior inside [-1,1]^2");
}

double analytic_sdf(const SdfShape& shape, double x1, double x2) {
  if (!std::isfinite(x1) || !std::isfinite(x2)) throw std::invalid_argument("analytic_sdf: non-finite point");
  switch (shape.kind) {
    case SdfShape::Kind::kCircle:
      return std::hypot(x1 - shape.center[0], x2 - shape.center[1]) - shape.radius;
    case SdfShape::Kind::kBox: {
      const double qx = std::abs(x1 - shape.center[0]) - shape.half_extents[0];
      const double qy = std::abs(x2 - shape.center[1]) - shape.half_extents[1];
      const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
      return outside + std::min(std::max(qx, qy), 0.0);
    }
    case SdfShape::Kind::kUnion: {
      double d = analytic_sdf(shape.children.front(), x1, x2);
      for (std::size_t i = 1; i < shape.children.size(); ++i) d = std::min(d, analytic_sdf(shape.children[i], x1, x2));
      return d;
    }
    case SdfShape::Kind::kDifference:
      return std::max(analytic_sdf(shape.children[0], x1, x2), -analytic_sdf(shape.children[1], x1, x2));
  }
  return 0.0;
}

Tensor circle_sdf_field(const SdfShape& circle, const Tensor& coords) {
  if (circle.kind != SdfShape::Kind::kCircle) throw std::invalid_argument("circle_sdf_field: shape is not a circle");
  if (coords.rank() != 2 || coords.cols() != 2)
    throw ShapeError("circle_sdf_field: expected [batch, 2], got " + shape_string(coords.shape()));
  const Tensor shifted = ad::add_bias(coords, Tensor::vector({-circle.center[0], -circle.center[1]}));
  const Tensor r2 = ad::matmul(ad::square(shifted), Tensor::full({2, 1}, 1.0));
  return ad::affine(ad::sqrt(r2), 1.0, -circle.radius);
}

// ---------------------------------------------------------------------------

ImageTask load_image(const std::string& path) {
  ImageTask t{read_image(path), path};
  if (t.image.rows < 2 || t.image.cols < 2)
    throw ImageIoError("cannot use image '" + path + "': extents must be at least 2x2");
  return t;
}

Grid2D Sdf2DTask::raster() const {
  Grid2D g(raster_resolution, raster_resolution);
  for (std::size_t i = 0; i < raster_resolution; ++i)
    for (std::size_t j = 0; j < raster_resolution; ++j)
      g(i, j) = analytic_sdf(shape, pixel_to_coord(j, raster_resolution), pixel_to_coord(i, raster_resolution));
  return g;
}

namespace {

void fnv_mix(std::uint64_t& h, std::span<const double> values) {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
}

FitTarget grid_target(const std::string& name, std::size_t rows, std::size_t cols) {
  FitTarget t;
  t.name = name;
  t.grid_rows = rows;
  t.grid_cols = cols;
  return t;
}

std::vector<double> grid_coords(std::size_t rows, std::size_t cols) {
  std::vector<double> c(rows * cols * 2);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c[2 * (i * cols + j)] = pixel_to_coord(j, cols);
      c[2 * (i * cols + j) + 1] = pixel_to_coord(i, rows);
    }
  }
  return c;
}

}  // namespace

std::string FitTarget::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  fnv_mix(h, coords.values());
  fnv_mix(h, values.values());
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

Image FitTarget::grid_image(const Tensor& predictions) const {
  if (predictions.rank() != 2 || predictions.rows() < grid_size() || predictions.cols() != channels)
    throw ShapeError("grid_image: predictions " + shape_string(predictions.shape()) + " do not cover the grid");
  Image img{grid_rows, grid_cols, channels, {}};
  const auto v = predictions.values();
  img.values.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(grid_size() * channels));
  return img;
}

FitTarget make_image_target(const Image& image, const std::string& name, const std::vector<std::size_t>& radii) {
  FitTarget t = grid_target(name, image.rows, image.cols);
  t.channels = image.channels;
  t.coords = Tensor({image.rows * image.cols, 2}, grid_coords(image.rows, image.cols));
  t.values = Tensor({image.rows * image.cols, image.channels}, image.values);
  t.pyramid = build_feature_pyramid(image.luminance(), radii);
  t.features = local_features(t.pyramid, t.coords);
  return t;
}

FitTarget make_sdf_target(const Sdf2DTask& task, const std::string& name, const std::vector<std::size_t>& radii) {
  task.shape.validate();
  if (task.raster_resolution < 3) throw std::invalid_argument("sdf task: raster resolution must be >= 3");
  if (!(task.band > 0.0)) throw std::invalid_argument("sdf task: boundary band must be positive");
  const std::size_t n = task.raster_resolution;
  FitTarget t = grid_target(name, n, n);
  t.is_sdf = true;
  t.shape = task.shape;
  const Grid2D raster = task.raster();

  std::vector<double> coords = grid_coords(n, n);
  std::vector<double> values = raster.values;
  const std::size_t extra = (n * n) / 4;
  std::mt19937_64 rng(task.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::size_t accepted = 0;
  for (std::size_t attempt = 0; accepted < extra; ++attempt) {
    if (attempt > extra * 100000) throw std::runtime_error("sdf task: boundary band too thin to sample");
    const double x1 = uniform(rng);
    const double x2 = uniform(rng);
    const double d = analytic_sdf(task.shape, x1, x2);
    if (std::abs(d) >= task.band) continue;
    coords.push_back(x1);
    coords.push_back(x2);
    values.push_back(d);
    ++accepted;
  }
  const std::size_t total = values.size();
  t.coords = Tensor({total, 2}, std::move(coords));
  t.values = Tensor({total, 1}, std::move(values));
  t.pyramid = build_feature_pyramid(raster, radii);
  t.features = local_features(t.pyramid, t.coords);
  return t;
}

std::string bundled_path(const std::string& file) { return std::string(HCINR_DATA_DIR) + "/" + file; }

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::size_t parse_size(const std::string& s, const std::string& spec) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw std::invalid_argument("task '" + spec + "': bad integer '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& spec) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw std::invalid_argument("task '" + spec + "': bad number '" + s + "'");
  return v;
}

}  // namespace

FitTarget resolve_task(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("task '" + spec + "': expected <kind>:<args>");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  const std::vector<std::string> args = split(rest, ':');

  if (kind == "bundled") {
    if (rest == "texture64") return make_image_target(load_image(bundled_path("texture64.pgm")).image, spec);
    throw std::invalid_argument("task '" + spec + "': unknown bundled asset");
  }
  if (kind == "image") return make_image_target(load_image(rest).image, spec);

  SyntheticSpec syn;
  if (kind == "checkerboard") {
    if (args.size() != 2) throw std::invalid_argument("task '" + spec + "': expected checkerboard:<res>:<cells>");
    syn.kind = SyntheticKind::kCheckerboard;
    syn.resolution = parse_size(args[0], spec);
    syn.cells = parse_size(args[1], spec);
    return make_image_target(Image::from_grid(make_synthetic(syn)), spec);
  }
  if (kind == "chirp") {
    if (args.size() != 3) throw std::invalid_argument("task '" + spec + "': expected chirp:<res>:<min>:<max>");
    syn.kind = SyntheticKind::kRadialChirp;
    syn.resolution = parse_size(args[0], spec);
    syn.omega_min = parse_double(args[1], spec);
    syn.omega_max = parse_double(args[2], spec);
    return make_image_target(Image::from_grid(make_synthetic(syn)), spec);
  }
  if (kind == "bumps") {
    if (args.size() != 4) throw std::invalid_argument("task '" + spec + "': expected bumps:<res>:<count>:<sigma>:<seed>");
    syn.kind = SyntheticKind::kGaussianBumps;
    syn.resolution = parse_size(args[0], spec);
    syn.count = parse_size(args[1], spec);
    syn.sigma = parse_double(args[2], spec);
    syn.seed = parse_size(args[3], spec);
    return make_image_target(Image::from_grid(make_synthetic(syn)), spec);
  }
  if (kind == "sdf") {
    if (args.empty() || args.size() > 2) throw std::invalid_argument("task '" + spec + "': expected sdf:<shape>[:<res>]");
    Sdf2DTask task;
    if (args.size() == 2) task.raster_resolution = parse_size(args[1], spec);
    if (args[0] == "circle") {
      task.shape = SdfShape::circle(0.0, 0.0, 0.5);
    } else if (args[0] == "box") {
      task.shape = SdfShape::box(0.0, 0.0, 0.4, 0.25);
    } else if (args[0] == "union") {
      task.shape = SdfShape::difference(
          SdfShape::make_union({SdfShape::circle(-0.25, 0.0, 0.4), SdfShape::circle(0.3, 0.1, 0.35)}),
          SdfShape::box(0.0, -0.3, 0.15, 0.15));
    } else {
      throw std::invalid_argument("task '" + spec + "': unknown shape '" + args[0] + "'");
    }
    return make_sdf_target(task, spec);
  }
  throw std::invalid_argument("task '" + spec + "': unknown task kind '" + kind + "'");
}

BandLimitedSignal load_tones(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read tone file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("cannot parse tone file '" + path + "': " + e.what());
  }
  BandLimitedSignal signal;
  for (const auto& t : doc.at("tones"))
    signal.tones.push_back(Tone{t.at("k1").get<int>(), t.at("k2").get<int>(), t.value("amplitude", 1.0),
                                t.value("phase", 0.0)});
  if (signal.tones.empty()) throw std::runtime_error("tone file '" + path + "' lists no tones");
  return signal;
}

BandLimitedSignal bundled_two_tone() { return load_tones(bundled_path("two_tone.json")); }

void write_field_dump(const std::string& path, std::size_t rows, std::size_t cols, const std::vector<double>& values,
                      const std::string& description) {
  if (values.size() != rows * cols) throw std::invalid_argument("write_field_dump: value count does not match extents");
  nlohmann::json header = {{"format", "hcinr-field"},
                           {"rows", rows},
                           {"cols", cols},
                           {"dtype", "float64-le"},
                           {"layout", "row-major, row 0 at x2 = -1 + 1/rows"},
                           {"description", description}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  static_assert(std::endian::native == std::endian::little, "field dumps assume a little-endian host");
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_field_dump(const std::string& path, std::size_t& rows, std::size_t& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 20)) throw std::runtime_error("field dump '" + path + "': bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const nlohmann::json header = nlohmann::json::parse(text);
  rows = header.at("rows").get<std::size_t>();
  cols = header.at("cols").get<std::size_t>();
  std::vector<double> values(rows * cols);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != values.size() * sizeof(double))
    throw std::runtime_error("field dump '" + path + "': truncated payload");
  return values;
}

}  // namespace hcinr
