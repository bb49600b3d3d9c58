#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Raw compute kernels behind the autodiff ops. Two implementations share
// each signature: the OpenMP-parallel kernels used everywhere, and a serial
// reference in `sopt::kernels::reference` kept for tests and benchmarks.
//
// All kernels accumulate in double and round once on store. Work is split so
// that every output element is owned by exactly one thread and summed in a
// fixed order, so results do not depend on the thread count.
// Backward kernels overwrite their outputs; callers add them into gradients.

namespace sopt::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
};

struct PoolGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t height = 2;
  std::size_t width = 2;
};

// x: N*I*H*W, w: O*I*K*K, b: O, y: N*O*OH*OW
void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> b, std::span<float> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const float> w, std::span<const float> dy,
                           std::span<float> dx);
void conv2d_backward_params(const ConvGeometry& g, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db);

// 2x2 window, stride 2. argmax receives the flat input index of each
// output's maximum; ties go to the first element in row-major order.
void maxpool2_forward(const PoolGeometry& g, std::span<const float> x, std::span<float> y,
                      std::span<std::uint32_t> argmax);

// y = x * w + b with x: N*D, w: D*M, b: M
void affine_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                    std::span<const float> w, std::span<const float> b, std::span<float> y);
void affine_backward_input(std::size_t n, std::size_t d, std::size_t m, std::span<const float> w,
                           std::span<const float> dy, std::span<float> dx);
void affine_backward_params(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                            std::span<const float> dy, std::span<float> dw, std::span<float> db);

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> b, std::span<float> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const float> w, std::span<const float> dy,
                           std::span<float> dx);
void conv2d_backward_params(const ConvGeometry& g, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db);
void maxpool2_forward(const PoolGeometry& g, std::span<const float> x, std::span<float> y,
                      std::span<std::uint32_t> argmax);
void affine_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                    std::span<const float> w, std::span<const float> b, std::span<float> y);
void affine_backward_input(std::size_t n, std::size_t d, std::size_t m, std::span<const float> w,
                           std::span<const float> dy, std::span<float> dx);
void affine_backward_params(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                            std::span<const float> dy, std::span<float> dw, std::span<float> db);

}  // namespace reference

// Sum of a[i] * b[i] in double with a fixed eight-lane split.
double dot_f64(const float* a, const float* b, std::size_t n);

}  // namespace sopt::kernels
