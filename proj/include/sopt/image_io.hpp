#pragma once

#include <string>

#include "sopt/tensor.hpp"

namespace sopt {

// Binary PGM (P5) / PPM (P6), 8-bit. Images are C x H x W floats in [0, 1];
// one channel maps to P5, three to P6.
Tensor read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Tensor& image);

// Byte used when writing a pixel: round(clamp(v, 0, 1) * 255).
unsigned char quantize_pixel(float v);

// Rounds every pixel to the nearest 8-bit level, i.e. what a write/read
// round trip yields.
Tensor quantize_image(const Tensor& image);

}  // namespace sopt
