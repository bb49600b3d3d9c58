#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "oracle64.hpp"
#include "sopt/net.hpp"

using namespace sopt;

namespace {

Tensor random_images(std::size_t n, const ImageShape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t({n, s.channels, s.height, s.width});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

RecognitionNet default_net(std::uint64_t seed = 1) {
  return build_net(small_net_8(8), ImageShape{3, 32, 32}, 8, seed);
}

}  // namespace

TEST(BuildNet, SameSeedSameParameters) {
  const auto a = default_net(5), b = default_net(5), c = default_net(6);
  EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
  EXPECT_NE(checkpoint_bytes(a), checkpoint_bytes(c));
}

TEST(BuildNet, DefaultArchitectureGivesEightLogits) {
  const auto net = default_net();
  const auto rec = forward(net, random_images(1, net.input, 3));
  EXPECT_EQ(rec.logits.shape(), (Shape{1, 8}));
  EXPECT_EQ(rec.layers.size(), net.layers.size());
  EXPECT_EQ(net.conv_activation_layers(), (std::vector<std::size_t>{1, 4, 7}));
}

TEST(BuildNet, InitStdMatchesFanIn) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = default_net(seed);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      if (net.params[l].empty()) continue;
      const Tensor& w = net.params[l][0];
      const std::size_t fan_in = w.rank() == 4 ? w.dim(1) * w.dim(2) * w.dim(3) : w.dim(0);
      double mean = 0, sq = 0;
      for (float v : w.data()) mean += v;
      mean /= double(w.numel());
      for (float v : w.data()) sq += (v - mean) * (v - mean);
      const double sd = std::sqrt(sq / double(w.numel() - 1));
      const double want = std::sqrt(2.0 / double(fan_in));
      EXPECT_NEAR(sd, want, 0.2 * want) << "layer " << l << " seed " << seed;
      for (float v : net.params[l][1].data()) EXPECT_EQ(v, 0.0f);
    }
  }
}

TEST(BuildNet, InvalidCompositionNamesLayer) {
  std::vector<LayerSpec> layers{layer::Conv{4, 3, 1, 1}, layer::MaxPool2{}, layer::MaxPool2{}, layer::Flatten{},
                                layer::Dense{2}};
  try {
    build_net(layers, ImageShape{1, 6, 6}, 2, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_net({layer::Flatten{}, layer::Dense{3}}, ImageShape{1, 4, 4}, 2, 1), ShapeError);
}

TEST(BuildNet, DeclaredShapesMatchRuntimeAcrossArchitectures) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> ch(1, 6), k(1, 3), coin(0, 1);
    std::vector<LayerSpec> layers;
    std::size_t size = 16;
    const std::size_t stages = 1 + trial % 3;
    for (std::size_t s = 0; s < stages; ++s) {
      const std::size_t kk = k(rng) | 1;
      layers.push_back(layer::Conv{ch(rng), kk, 1, kk / 2});
      layers.push_back(layer::ReLU{});
      if (coin(rng) && size % 2 == 0) {
        layers.push_back(layer::MaxPool2{});
        size /= 2;
      }
    }
    layers.push_back(layer::Flatten{});
    if (coin(rng)) {
      layers.push_back(layer::Dense{5});
      layers.push_back(layer::ReLU{});
    }
    layers.push_back(layer::Dense{3});
    const ImageShape in{1 + trial % 3, 16, 16};
    const auto net = build_net(layers, in, 3, std::uint64_t(trial));
    const auto shapes = net.layer_shapes();
    const auto rec = forward(net, random_images(2, in, trial));
    ASSERT_EQ(rec.layers.size(), layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Shape want{2};
      want.insert(want.end(), shapes[l].begin(), shapes[l].end());
      EXPECT_EQ(rec.layers[l].shape(), want) << "trial " << trial << " layer " << l;
    }
  }
}

TEST(Forward, DeterministicAndNormalized) {
  const auto net = default_net();
  const Tensor images = random_images(100, net.input, 9);
  const auto a = forward(net, images), b = forward(net, images);
  EXPECT_TRUE(a.logits == b.logits);
  for (std::size_t i = 0; i < 100; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 8; ++j) row += a.probs[i * 8 + j];
    EXPECT_NEAR(row, 1.0, 1e-6);
  }
}

TEST(Forward, ZeroImageZeroBiasGivesZeroActivations) {
  const auto net = default_net();
  const auto rec = forward(net, Tensor({1, 3, 32, 32}, 0.0f));
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l)
    for (float v : rec.layers[l].data()) ASSERT_EQ(v, 0.0f) << "layer " << l;
}

TEST(Forward, RejectsBadInput) {
  const auto net = default_net();
  EXPECT_THROW(forward(net, Tensor({1, 1, 32, 32}, 0.5f)), ShapeError);
  EXPECT_THROW(forward(net, Tensor({1, 3, 32, 32}, 1.5f)), ShapeError);
}

TEST(Forward, MatchesDoubleOracle) {
  const auto net = default_net(3);
  const Tensor image = random_images(1, net.input, 4);
  const auto rec = forward(net, image);
  const auto want = oracle::forward(net, oracle::to_vec(image));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    double scale = 0;
    for (double v : want[l]) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < want[l].size(); ++i)
      ASSERT_NEAR(rec.layers[l][i], want[l][i], 1e-5 * scale) << "layer " << l;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto net = default_net(2);
  net.class_names = {"a", "b", "c", "d", "e", "f", "g", "h"};
  const std::string path = ::testing::TempDir() + "net.sopt";
  save_checkpoint(net, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.class_names, net.class_names);
  EXPECT_TRUE(back.input == net.input);
  for (std::size_t l = 0; l < net.params.size(); ++l)
    for (std::size_t p = 0; p < net.params[l].size(); ++p) EXPECT_TRUE(back.params[l][p] == net.params[l][p]);
  const Tensor images = random_images(3, net.input, 1);
  EXPECT_TRUE(forward(back, images).logits == forward(net, images).logits);
  EXPECT_EQ(checkpoint_bytes(back), checkpoint_bytes(net));
}

TEST(Checkpoint, HeaderLayout) {
  const std::string bytes = checkpoint_bytes(default_net());
  EXPECT_EQ(bytes.substr(0, 4), "SOPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointVersion);
  EXPECT_EQ(bytes[5], 0);
}

namespace {
CheckpointErrorCode code_of(const std::string& bytes) {
  try {
    checkpoint_from_bytes(bytes);
  } catch (const CheckpointError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return CheckpointErrorCode::Io;
}
}  // namespace

TEST(Checkpoint, DistinctErrorCodes) {
  const std::string good = checkpoint_bytes(default_net());
  std::string magic = good;
  magic.replace(0, 4, "XXXX");
  EXPECT_EQ(code_of(magic), CheckpointErrorCode::BadMagic);
  std::string version = good;
  version[4] = 9;
  EXPECT_EQ(code_of(version), CheckpointErrorCode::VersionMismatch);
  EXPECT_EQ(code_of(good.substr(0, good.size() - 7)), CheckpointErrorCode::Truncation);
  EXPECT_EQ(code_of(good.substr(0, 30)), CheckpointErrorCode::Truncation);
  EXPECT_EQ(code_of(good + "extra"), CheckpointErrorCode::Malformed);
  EXPECT_THROW(load_checkpoint(::testing::TempDir() + "does-not-exist.sopt"), MissingInputError);
}
