#include <algorithm>
#include <array>
#include <vector>

#include "sopt/kernels.hpp"

namespace sopt::kernels {

double dot_f64(const float* a, const float* b, std::size_t n) {
  std::array<double, 8> lanes{};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l)
      lanes[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
  for (std::size_t l = 0; i < n; ++i, ++l) lanes[l] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

namespace {

inline void axpy_f64(double* acc, double alpha, const float* x, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) acc[j] += alpha * static_cast<double>(x[j]);
}

// Unfolds one image into a (I*K*K) x (OH*OW) patch matrix.
void im2col(const ConvGeometry& g, const float* x, float* col) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel;
  const auto rows = static_cast<std::ptrdiff_t>(g.patch_size());
#pragma omp parallel for schedule(static) if (rows * oh * ow > 32768)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t i = static_cast<std::size_t>(r) / (kk * kk);
    const std::size_t ky = (static_cast<std::size_t>(r) / kk) % kk;
    const std::size_t kx = static_cast<std::size_t>(r) % kk;
    const float* plane = x + i * g.height * g.width;
    float* dst = col + static_cast<std::size_t>(r) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                            ix < static_cast<std::ptrdiff_t>(g.width);
        dst[oy * ow + ox] = inside ? plane[iy * static_cast<std::ptrdiff_t>(g.width) + ix] : 0.0f;
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> b, std::span<float> y) {
  const std::size_t plane = g.out_height() * g.out_width();
  const std::size_t rows = g.patch_size();
  std::vector<float> col(rows * plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x.data() + n * g.in_channels * g.height * g.width, col.data());
    const auto outs = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel
    {
      std::vector<double> acc(plane);
#pragma omp for schedule(static)
      for (std::ptrdiff_t o = 0; o < outs; ++o) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(b[o]));
        const float* wrow = w.data() + static_cast<std::size_t>(o) * rows;
        for (std::size_t r = 0; r < rows; ++r) axpy_f64(acc.data(), wrow[r], col.data() + r * plane, plane);
        float* dst = y.data() + (n * g.out_channels + static_cast<std::size_t>(o)) * plane;
        for (std::size_t j = 0; j < plane; ++j) dst[j] = static_cast<float>(acc[j]);
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const float> w, std::span<const float> dy,
                           std::span<float> dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), plane = oh * ow;
  const std::size_t kk = g.kernel, rows = g.patch_size();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const float* dyn = dy.data() + n * g.out_channels * plane;
    const auto ins = static_cast<std::ptrdiff_t>(g.in_channels);
#pragma omp parallel
    {
      std::vector<double> dcol(plane);
      std::vector<double> dplane(g.height * g.width);
#pragma omp for schedule(static)
      for (std::ptrdiff_t si = 0; si < ins; ++si) {
        const auto i = static_cast<std::size_t>(si);
        std::fill(dplane.begin(), dplane.end(), 0.0);
        for (std::size_t ky = 0; ky < kk; ++ky) {
          for (std::size_t kx = 0; kx < kk; ++kx) {
            const std::size_t r = (i * kk + ky) * kk + kx;
            std::fill(dcol.begin(), dcol.end(), 0.0);
            for (std::size_t o = 0; o < g.out_channels; ++o)
              axpy_f64(dcol.data(), w[o * rows + r], dyn + o * plane, plane);
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                dplane[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)] += dcol[oy * ow + ox];
              }
            }
          }
        }
        float* dst = dx.data() + (n * g.in_channels + i) * g.height * g.width;
        for (std::size_t j = 0; j < dplane.size(); ++j) dst[j] = static_cast<float>(dplane[j]);
      }
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db) {
  const std::size_t plane = g.out_height() * g.out_width();
  const std::size_t rows = g.patch_size();
  std::vector<float> cols(g.batch * rows * plane);
  for (std::size_t n = 0; n < g.batch; ++n)
    im2col(g, x.data() + n * g.in_channels * g.height * g.width, cols.data() + n * rows * plane);
  const auto outs = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t so = 0; so < outs; ++so) {
    const auto o = static_cast<std::size_t>(so);
    std::vector<double> acc(rows, 0.0);
    double bias = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const float* dyo = dy.data() + (n * g.out_channels + o) * plane;
      for (std::size_t j = 0; j < plane; ++j) bias += dyo[j];
      const float* coln = cols.data() + n * rows * plane;
      for (std::size_t r = 0; r < rows; ++r) acc[r] += dot_f64(dyo, coln + r * plane, plane);
    }
    for (std::size_t r = 0; r < rows; ++r) dw[o * rows + r] = static_cast<float>(acc[r]);
    db[o] = static_cast<float>(bias);
  }
}

void maxpool2_forward(const PoolGeometry& g, std::span<const float> x, std::span<float> y,
                      std::span<std::uint32_t> argmax) {
  const std::size_t oh = g.height / 2, ow = g.width / 2;
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.channels);
#pragma omp parallel for schedule(static) if (planes * oh * ow > 16384)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * g.height * g.width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + 2 * oy * g.width + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * g.width + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t out = static_cast<std::size_t>(p) * oh * ow + oy * ow + ox;
        y[out] = x[best];
        argmax[out] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void affine_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                    std::span<const float> w, std::span<const float> b, std::span<float> y) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * d * m > 65536)
  for (std::ptrdiff_t si = 0; si < rows; ++si) {
    const auto i = static_cast<std::size_t>(si);
    std::vector<double> acc(b.begin(), b.end());
    for (std::size_t k = 0; k < d; ++k) axpy_f64(acc.data(), x[i * d + k], w.data() + k * m, m);
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] = static_cast<float>(acc[j]);
  }
}

void affine_backward_input(std::size_t n, std::size_t d, std::size_t m, std::span<const float> w,
                           std::span<const float> dy, std::span<float> dx) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * d * m > 65536)
  for (std::ptrdiff_t si = 0; si < rows; ++si) {
    const auto i = static_cast<std::size_t>(si);
    for (std::size_t k = 0; k < d; ++k)
      dx[i * d + k] = static_cast<float>(dot_f64(dy.data() + i * m, w.data() + k * m, m));
  }
}

void affine_backward_params(std::size_t n, std::size_t d, std::size_t m, std::span<const float> x,
                            std::span<const float> dy, std::span<float> dw, std::span<float> db) {
  const auto inner = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(static) if (n * d * m > 65536)
  for (std::ptrdiff_t sk = 0; sk < inner; ++sk) {
    const auto k = static_cast<std::size_t>(sk);
    std::vector<double> acc(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) axpy_f64(acc.data(), x[i * d + k], dy.data() + i * m, m);
    for (std::size_t j = 0; j < m; ++j) dw[k * m + j] = static_cast<float>(acc[j]);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += dy[i * m + j];
    db[j] = static_cast<float>(s);
  }
}

}  // namespace sopt::kernels
