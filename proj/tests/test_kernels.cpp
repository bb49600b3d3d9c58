#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <random>

#include "oracle64.hpp"
#include "sopt/kernels.hpp"

namespace k = sopt::kernels;

namespace {

std::vector<float> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

oracle::Vec widen(const std::vector<float>& v) { return oracle::Vec(v.begin(), v.end()); }

void expect_close(const std::vector<float>& got, const oracle::Vec& want, double rel) {
  ASSERT_EQ(got.size(), want.size());
  double scale = 0.0;
  for (double w : want) scale = std::max(scale, std::abs(w));
  for (std::size_t i = 0; i < got.size(); ++i)
    ASSERT_LE(std::abs(got[i] - want[i]), rel * std::max(std::abs(want[i]), 1e-3 * scale) + 1e-12) << "at " << i;
}

k::ConvGeometry random_geometry(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> small(1, 4), size(3, 9), kernel(1, 3), stride(1, 2), pad(0, 1);
  k::ConvGeometry g;
  g.batch = small(rng) % 3 + 1;
  g.in_channels = small(rng);
  g.height = size(rng);
  g.width = size(rng);
  g.out_channels = small(rng);
  g.kernel = kernel(rng);
  g.stride = stride(rng);
  g.pad = pad(rng);
  return g;
}

}  // namespace

TEST(Conv2d, ScalarProduct) {
  k::ConvGeometry g;
  std::vector<float> y(1);
  k::conv2d_forward(g, std::vector<float>{3.0f}, std::vector<float>{2.0f}, std::vector<float>{0.0f}, y);
  EXPECT_EQ(y[0], 6.0f);
}

TEST(Conv2d, ZeroInputGivesBias) {
  k::ConvGeometry g{1, 2, 4, 4, 2, 3, 1, 1};
  std::mt19937_64 rng(3);
  const auto w = random_vec(rng, 2 * 2 * 9);
  std::vector<float> y(2 * 16);
  k::conv2d_forward(g, std::vector<float>(32, 0.0f), w, std::vector<float>{1.0f, -1.0f}, y);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(y[i], 1.0f);
    EXPECT_EQ(y[16 + i], -1.0f);
  }
}

TEST(Conv2d, ParallelMatchesReferenceAndOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_geometry(rng);
    if (g.height + 2 * g.pad < g.kernel || g.width + 2 * g.pad < g.kernel) continue;
    const std::size_t oh = g.out_height(), ow = g.out_width();
    const auto x = random_vec(rng, g.batch * g.in_channels * g.height * g.width);
    const auto w = random_vec(rng, g.out_channels * g.patch_size());
    const auto b = random_vec(rng, g.out_channels);
    std::vector<float> y(g.batch * g.out_channels * oh * ow), y_ref(y.size());
    k::conv2d_forward(g, x, w, b, y);
    k::reference::conv2d_forward(g, x, w, b, y_ref);
    EXPECT_EQ(y, y_ref);
    expect_close(y, oracle::conv2d(widen(x), widen(w), widen(b), g.batch, g.in_channels, g.height, g.width,
                                   g.out_channels, g.kernel, g.stride, g.pad),
                 1e-6);
  }
}

TEST(Conv2d, BackwardMatchesReference) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_geometry(rng);
    if (g.height + 2 * g.pad < g.kernel || g.width + 2 * g.pad < g.kernel) continue;
    const auto x = random_vec(rng, g.batch * g.in_channels * g.height * g.width);
    const auto w = random_vec(rng, g.out_channels * g.patch_size());
    const auto dy = random_vec(rng, g.batch * g.out_channels * g.out_height() * g.out_width());
    std::vector<float> dx(x.size()), dx_ref(x.size()), dw(w.size()), dw_ref(w.size()), db(g.out_channels),
        db_ref(g.out_channels);
    k::conv2d_backward_input(g, w, dy, dx);
    k::reference::conv2d_backward_input(g, w, dy, dx_ref);
    k::conv2d_backward_params(g, x, dy, dw, db);
    k::reference::conv2d_backward_params(g, x, dy, dw_ref, db_ref);
    EXPECT_EQ(dx, dx_ref);
    EXPECT_EQ(dw, dw_ref);
    EXPECT_EQ(db, db_ref);
  }
}

// <dy, conv(x)> = <conv^T(dy), x>: checks the input backward against the forward.
TEST(Conv2d, BackwardIsAdjointOfForward) {
  std::mt19937_64 rng(13);
  const k::ConvGeometry g{2, 3, 7, 6, 4, 3, 2, 1};
  const auto x = random_vec(rng, 2 * 3 * 7 * 6);
  const auto w = random_vec(rng, 4 * g.patch_size());
  const auto dy = random_vec(rng, 2 * 4 * g.out_height() * g.out_width());
  std::vector<float> y(dy.size()), dx(x.size());
  k::conv2d_forward(g, x, w, std::vector<float>(4, 0.0f), y);
  k::conv2d_backward_input(g, w, dy, dx);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += double(y[i]) * dy[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += double(dx[i]) * x[i];
  EXPECT_NEAR(lhs, rhs, 1e-4 * std::abs(lhs));
}

TEST(Conv2d, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(14);
  const k::ConvGeometry g{4, 3, 16, 16, 8, 3, 1, 1};
  const auto x = random_vec(rng, 4 * 3 * 256);
  const auto w = random_vec(rng, 8 * 27);
  const auto b = random_vec(rng, 8);
  std::vector<float> y1(4 * 8 * 256), y4(y1.size());
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  k::conv2d_forward(g, x, w, b, y1);
  omp_set_num_threads(4);
  k::conv2d_forward(g, x, w, b, y4);
  omp_set_num_threads(saved);
  EXPECT_EQ(y1, y4);
}

TEST(MaxPool, ConstantField) {
  const k::PoolGeometry g{1, 1, 4, 6};
  std::vector<float> y(6);
  std::vector<std::uint32_t> arg(6);
  k::maxpool2_forward(g, std::vector<float>(24, 2.5f), y, arg);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], 2.5f);
  // Ties go to the top-left element of each window.
  EXPECT_EQ(arg[0], 0u);
  EXPECT_EQ(arg[1], 2u);
  EXPECT_EQ(arg[3], 12u);
}

TEST(MaxPool, UniqueMax) {
  const k::PoolGeometry g{1, 1, 2, 2};
  std::vector<float> y(1);
  std::vector<std::uint32_t> arg(1);
  k::maxpool2_forward(g, std::vector<float>{1, 2, 3, 4}, y, arg);
  EXPECT_EQ(y[0], 4.0f);
  EXPECT_EQ(arg[0], 3u);
}

TEST(MaxPool, MatchesOracleExactly) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const k::PoolGeometry g{1, 3, 8, 8};
    const auto x = random_vec(rng, 3 * 64);
    std::vector<float> y(3 * 16), y_ref(y.size());
    std::vector<std::uint32_t> arg(y.size()), arg_ref(y.size());
    k::maxpool2_forward(g, x, y, arg);
    k::reference::maxpool2_forward(g, x, y_ref, arg_ref);
    const auto want = oracle::maxpool2(widen(x), 3, 8, 8);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(double(y[i]), want[i]);
    EXPECT_EQ(y, y_ref);
    EXPECT_EQ(arg, arg_ref);
  }
}

TEST(Affine, IdentityWeights) {
  const std::vector<float> x{1, -2, 3, 4, 5, -6};
  std::vector<float> w(9, 0.0f);
  for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  std::vector<float> y(6);
  k::affine_forward(2, 3, 3, x, w, std::vector<float>(3, 0.0f), y);
  EXPECT_EQ(y, x);
}

TEST(Affine, MatchesOracleAndReference) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 40);
    const std::size_t n = dim(rng) % 5 + 1, d = dim(rng), m = dim(rng) % 9 + 1;
    const auto x = random_vec(rng, n * d), w = random_vec(rng, d * m), b = random_vec(rng, m);
    std::vector<float> y(n * m), y_ref(n * m);
    k::affine_forward(n, d, m, x, w, b, y);
    k::reference::affine_forward(n, d, m, x, w, b, y_ref);
    expect_close(y, oracle::affine(widen(x), widen(w), widen(b), n, d, m), 1e-6);
    expect_close(y_ref, oracle::affine(widen(x), widen(w), widen(b), n, d, m), 1e-6);

    const auto dy = random_vec(rng, n * m);
    std::vector<float> dx(n * d), dx_ref(n * d), dw(d * m), dw_ref(d * m), db(m), db_ref(m);
    k::affine_backward_input(n, d, m, w, dy, dx);
    k::reference::affine_backward_input(n, d, m, w, dy, dx_ref);
    k::affine_backward_params(n, d, m, x, dy, dw, db);
    k::reference::affine_backward_params(n, d, m, x, dy, dw_ref, db_ref);
    expect_close(dx, widen(dx_ref), 1e-6);
    expect_close(dw, widen(dw_ref), 1e-6);
    expect_close(db, widen(db_ref), 1e-6);
  }
}

TEST(Affine, SpecExampleTwoByThreeByFour) {
  std::mt19937_64 rng(32);
  const auto x = random_vec(rng, 6), w = random_vec(rng, 12), b = random_vec(rng, 4);
  std::vector<float> y(8);
  k::affine_forward(2, 3, 4, x, w, b, y);
  expect_close(y, oracle::affine(widen(x), widen(w), widen(b), 2, 3, 4), 1e-6);
}

TEST(Dot, FixedLanesMatchDouble) {
  std::mt19937_64 rng(41);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 100u, 1023u}) {
    const auto a = random_vec(rng, n), b = random_vec(rng, n);
    double want = 0;
    for (std::size_t i = 0; i < n; ++i) want += double(a[i]) * b[i];
    EXPECT_NEAR(k::dot_f64(a.data(), b.data(), n), want, 1e-12 * (1 + std::abs(want)));
  }
}
