#include "sopt/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace sopt {

namespace {

std::size_t read_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw FormatError(path + ": malformed PNM header");
  std::size_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + static_cast<std::size_t>(c - '0');
    if (v > (1u << 24)) throw FormatError(path + ": PNM dimension too large");
    c = in.get();
  }
  if (c == EOF || !std::isspace(c)) throw FormatError(path + ": malformed PNM header");
  return v;
}

}  // namespace

unsigned char quantize_pixel(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

Tensor quantize_image(const Tensor& image) {
  Tensor out = image;
  for (auto& v : out.data()) v = static_cast<float>(quantize_pixel(v)) / 255.0f;
  return out;
}

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("image not found: " + path);
  char magic[2] = {0, 0};
  if (!in.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw FormatError(path + ": not a binary PGM/PPM (P5/P6)");
  const std::size_t channels = magic[1] == '5' ? 1 : 3;
  const std::size_t width = read_header_int(in, path);
  const std::size_t height = read_header_int(in, path);
  const std::size_t maxval = read_header_int(in, path);
  if (width == 0 || height == 0) throw FormatError(path + ": zero image dimension");
  if (maxval == 0 || maxval > 255) throw FormatError(path + ": only 8-bit maxval is supported");
  std::vector<unsigned char> raw(width * height * channels);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw FormatError(path + ": truncated pixel data");
  Tensor image({channels, height, width});
  const auto denom = static_cast<float>(maxval);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        image[(c * height + y) * width + x] =
            std::min(1.0f, static_cast<float>(raw[(y * width + x) * channels + c]) / denom);
  return image;
}

void write_pnm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw ShapeError("write_pnm: image must be 1 x H x W or 3 x H x W, got " + shape_str(image.shape()));
  const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << "\n255\n";
  std::vector<unsigned char> raw(width * height * channels);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        raw[(y * width + x) * channels + c] = quantize_pixel(image[(c * height + y) * width + x]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace sopt
