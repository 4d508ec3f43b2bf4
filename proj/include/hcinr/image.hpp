#pragma once

// Raster I/O for binary PGM (P5) and PNG. Samples are stored as doubles in
// [0, 1]; 16-bit files keep their full precision.

#include "hcinr/features.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace hcinr {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Interleaved row-major samples, `channels` per pixel (1 = gray, 3 = RGB).
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 1;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return values[(r * cols + c) * channels + ch];
  }
  Grid2D channel(std::size_t ch) const;
  // Channel mean, used as the feature source for colour images.
  Grid2D luminance() const;
  static Image from_grid(const Grid2D& grid);
};

Image read_pgm(const std::string& path);
Image read_png(const std::string& path);
// Dispatches on the file signature.
Image read_image(const std::string& path);

// Values are clamped to [0, 1] and rounded to the nearest level.
void write_pgm(const Image& image, const std::string& path, int bit_depth = 8);
void write_png(const Image& image, const std::string& path, int bit_depth = 8);
// By extension: ".png" writes PNG, anything else PGM.
void write_image(const Image& image, const std::string& path, int bit_depth = 8);

}  // namespace hcinr
