#include <vector>

#include "sopt/kernels.hpp"

// Straight loop nests, single-threaded. Same double accumulation contract as
// the parallel kernels, with summation in natural loop order.

namespace sopt::kernels::reference {

namespace {
inline bool pixel_at(const ConvGeometry& g, std::size_t o_y, std::size_t o_x, std::size_t ky, std::size_t kx,
                     std::size_t& iy, std::size_t& ix) {
  const auto y = static_cast<std::ptrdiff_t>(o_y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
  const auto x = static_cast<std::ptrdiff_t>(o_x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
  if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(g.height) || x >= static_cast<std::ptrdiff_t>(g.width))
    return false;
  iy = static_cast<std::size_t>(y);
  ix = static_cast<std::size_t>(x);
  return true;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> b, std::span<float> y) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b[o];
          for (std::size_t i = 0; i < g.in_channels; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                std::size_t iy = 0, ix = 0;
                if (!pixel_at(g, oy, ox, ky, kx, iy, ix)) continue;
                acc += static_cast<double>(w[((o * g.in_channels + i) * k + ky) * k + kx]) *
                       x[((n * g.in_channels + i) * g.height + iy) * g.width + ix];
              }
          y[((n * g.out_channels + o) * oh + oy) * ow + ox] = static_cast<float>(acc);
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const float> w, std::span<const float> dy,
                           std::span<float> dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  std::vector<double> acc(g.batch * g.in_channels * g.height * g.width, 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double grad = dy[((n * g.out_channels + o) * oh + oy) * ow + ox];
          for (std::size_t i = 0; i < g.in_channels; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                std::size_t iy = 0, ix = 0;
                if (!pixel_at(g, oy, ox, ky, kx, iy, ix)) continue;
                acc[((n * g.in_channels + i) * g.height + iy) * g.width + ix] +=
                    grad * w[((o * g.in_channels + i) * k + ky) * k + kx];
              }
        }
  for (std::size_t j = 0; j < acc.size(); ++j) dx[j] = static_cast<float>(acc[j]);
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  std::vector<double> acc(g.out_channels * g.patch_size(), 0.0);
  std::vector<double> bias(g.out_channels, 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double grad = dy[((n * g.out_channels + o) * oh + oy) * ow + ox];
          bias[o] += grad;
          for (std::size_t i = 0; i < g.in_channels; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                std::size_t iy = 0, ix = 0;
                if (!pixel_at(g, oy, ox, ky, kx, iy, ix)) continue;
                acc[((o * g.in_channels + i) * k + ky) * k + kx] +=
                    grad * x[((n * g.in_channels + i) * g.height + iy) * g.width + ix];
              }
        }
  for (std::size_t j = 0; j < acc.size(); ++j) dw[j] = static_cast<float>(acc[j]);
  for (std::size_t o = 0; o < g.out_channels; ++o) db[o] = static_cast<float>(bias[o]);
}

void maxpool2_forward(const PoolGeometry& g, std::span<const float> x, std::span<float> y,
                      std::span<std::uint32_t> argmax) {
  const std::size_t oh = g.height / 2, ow = g.width / 2;
  for (std::size_t p = 0; p < g.batch * g.channels; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = 0;
        bool first = true;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (p * g.height + 2 * oy + dy) * g.width + 2 * ox + dx;
            if (first || x[idx] > x[best]) best = idx;
            first = false;
          }
        y[(p * oh + oy) * ow + ox] = x[best];
        argmax[(p * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best);
      }
}

void affine_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                    std::span<const float> w, std::span<const float> b, std::span<float> y) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(x[i * d + k]) * w[k * m + j];
      y[i * m + j] = static_cast<float>(acc);
    }
}

void affine_backward_input(std::size_t n, std::size_t d, std::size_t m, std::span<const float> w,
                           std::span<const float> dy, std::span<float> dx) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += static_cast<double>(dy[i * m + j]) * w[k * m + j];
      dx[i * d + k] = static_cast<float>(acc);
    }
}

void affine_backward_params(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                            std::span<const float> dy, std::span<float> dw, std::span<float> db) {
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i * d + k]) * dy[i * m + j];
      dw[k * m + j] = static_cast<float>(acc);
    }
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += dy[i * m + j];
    db[j] = static_cast<float>(acc);
  }
}

}  // namespace sopt::kernels::reference
