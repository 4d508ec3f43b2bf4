#include "hcinr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>

namespace hcinr {

Grid2D Image::channel(std::size_t ch) const {
  if (ch >= channels) throw std::out_of_range("Image::channel: no channel " + std::to_string(ch));
  Grid2D g(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) g.values[i] = values[i * channels + ch];
  return g;
}

Grid2D Image::luminance() const {
  Grid2D g(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) acc += values[i * channels + ch];
    g.values[i] = acc / static_cast<double>(channels);
  }
  return g;
}

Image Image::from_grid(const Grid2D& grid) { return Image{grid.rows, grid.cols, 1, grid.values}; }

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& reason) {
  throw ImageIoError("cannot read image '" + path + "': " + reason);
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) fail(path, "truncated header");
  return tok;
}

std::size_t pnm_number(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = pnm_token(in, path);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char ch) { return std::isdigit(ch); }))
    fail(path, std::string("bad ") + what + " '" + tok + "'");
  return std::stoul(tok);
}

std::uint16_t quantize(double v, std::uint32_t max_level) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(c * static_cast<double>(max_level)));
}

void check_writable(const Image& image, int bit_depth, const std::string& path) {
  if (bit_depth != 8 && bit_depth != 16)
    throw ImageIoError("cannot write '" + path + "': bit depth must be 8 or 16");
  if (image.values.size() != image.rows * image.cols * image.channels || image.rows == 0 || image.cols == 0)
    throw ImageIoError("cannot write '" + path + "': image storage does not match its extents");
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "file cannot be opened");
  const std::string magic = pnm_token(in, path);
  if (magic != "P5" && magic != "P6") fail(path, "not a binary PGM/PPM (magic '" + magic + "')");
  Image img;
  img.channels = magic == "P5" ? 1 : 3;
  img.cols = pnm_number(in, path, "width");
  img.rows = pnm_number(in, path, "height");
  const std::size_t maxval = pnm_number(in, path, "maxval");
  if (img.cols == 0 || img.rows == 0) fail(path, "zero extent");
  if (maxval != 255 && maxval != 65535)
    fail(path, "unsupported maxval " + std::to_string(maxval) + " (expected 255 or 65535)");
  const bool wide = maxval > 255;
  const std::size_t count = img.rows * img.cols * img.channels;
  std::vector<unsigned char> raw(count * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(path, "truncated pixel data");
  img.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t level = wide ? (static_cast<std::size_t>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    if (level > maxval) fail(path, "sample exceeds maxval");
    img.values[i] = static_cast<double>(level) / static_cast<double>(maxval);
  }
  return img;
}

Image read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) fail(path, "file cannot be opened");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "libpng initialisation failed");
  }
  Image img;
  std::string error;
  std::vector<png_bytep> row_ptrs;
  std::vector<unsigned char> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "malformed PNG stream");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 && depth != 16) {
    error = "unsupported bit depth " + std::to_string(depth) + " (expected 8 or 16)";
  } else if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) {
    error = "unsupported colour type (expected gray or RGB without alpha or palette)";
  }
  if (!error.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, error);
  }
  img.cols = png_get_image_width(png, info);
  img.rows = png_get_image_height(png, info);
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  const std::size_t bytes = depth / 8;
  const std::size_t stride = img.cols * img.channels * bytes;
  data.resize(stride * img.rows);
  row_ptrs.resize(img.rows);
  for (std::size_t r = 0; r < img.rows; ++r) row_ptrs[r] = data.data() + r * stride;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const double maxval = depth == 16 ? 65535.0 : 255.0;
  const std::size_t count = img.rows * img.cols * img.channels;
  img.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    // PNG stores 16-bit samples big-endian.
    const double level = bytes == 2 ? static_cast<double>((data[2 * i] << 8) | data[2 * i + 1]) : data[i];
    img.values[i] = level / maxval;
  }
  return img;
}

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "file cannot be opened");
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  in.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pgm(path);
  fail(path, "unrecognised format (expected PGM or PNG)");
}

void write_pgm(const Image& image, const std::string& path, int bit_depth) {
  check_writable(image, bit_depth, path);
  if (image.channels != 1 && image.channels != 3)
    throw ImageIoError("cannot write '" + path + "': PGM/PPM needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write '" + path + "': file cannot be opened");
  const std::uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.cols << ' ' << image.rows << '\n' << maxval << '\n';
  std::vector<unsigned char> raw;
  raw.reserve(image.values.size() * (bit_depth / 8));
  for (double v : image.values) {
    const std::uint16_t q = quantize(v, maxval);
    if (bit_depth == 16) raw.push_back(static_cast<unsigned char>(q >> 8));
    raw.push_back(static_cast<unsigned char>(q & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ImageIoError("cannot write '" + path + "': write failed");
}

void write_png(const Image& image, const std::string& path, int bit_depth) {
  check_writable(image, bit_depth, path);
  if (image.channels != 1 && image.channels != 3)
    throw ImageIoError("cannot write '" + path + "': PNG output needs 1 or 3 channels");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot write '" + path + "': file cannot be opened");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("cannot write '" + path + "': libpng initialisation failed");
  }
  const std::uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  const std::size_t bytes = static_cast<std::size_t>(bit_depth / 8);
  const std::size_t stride = image.cols * image.channels * bytes;
  std::vector<unsigned char> data(stride * image.rows);
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const std::uint16_t q = quantize(image.values[i], maxval);
    if (bytes == 2) {
      data[2 * i] = static_cast<unsigned char>(q >> 8);
      data[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    } else {
      data[i] = static_cast<unsigned char>(q);
    }
  }
  std::vector<png_bytep> rows(image.rows);
  for (std::size_t r = 0; r < image.rows; ++r) rows[r] = data.data() + r * stride;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("cannot write '" + path + "': libpng error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.cols), static_cast<png_uint_32>(image.rows), bit_depth,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_image(const Image& image, const std::string& path, int bit_depth) {
  const bool png = path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0;
  if (png)
    write_png(image, path, bit_depth);
  else
    write_pgm(image, path, bit_depth);
}

}  // namespace hcinr
