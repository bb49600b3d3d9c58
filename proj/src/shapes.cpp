#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "sopt/data.hpp"
#include "sopt/rng.hpp"

namespace sopt {

const std::vector<std::string>& all_shape_names() {
  static const std::vector<std::string> names{"circle", "square", "triangle", "cross",
                                              "ring",   "stripes", "checker", "star"};
  return names;
}

ShapeKind parse_shape_kind(const std::string& name) {
  const auto& names = all_shape_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<ShapeKind>(i);
  throw ConfigError("unknown shape class '" + name + "'");
}

std::string shape_kind_name(ShapeKind kind) { return all_shape_names().at(static_cast<std::size_t>(kind)); }

void ShapesSpec::validate() const {
  if (classes.size() < 2) throw ConfigError("shapes: need at least 2 classes");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    parse_shape_kind(classes[i]);
    for (std::size_t j = 0; j < i; ++j)
      if (classes[i] == classes[j]) throw ConfigError("shapes: duplicate class '" + classes[i] + "'");
  }
  if (size < 16) throw ConfigError("shapes: image size must be at least 16");
  if (scale_min <= 0 || scale_max < scale_min) throw ConfigError("shapes: invalid scale range");
  if (position_jitter < 0 || rotation_jitter < 0 || noise_std < 0) throw ConfigError("shapes: negative jitter");
}

namespace {

// Five-pointed star, outer radius 1, inner 0.42.
const std::array<std::array<double, 2>, 10>& star_polygon() {
  static const auto poly = [] {
    std::array<std::array<double, 2>, 10> p{};
    for (int i = 0; i < 10; ++i) {
      const double r = i % 2 == 0 ? 1.0 : 0.42;
      const double a = std::numbers::pi / 2 + i * std::numbers::pi / 5;
      p[i] = {r * std::cos(a), r * std::sin(a)};
    }
    return p;
  }();
  return poly;
}

bool in_polygon(const std::array<std::array<double, 2>, 10>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) inside = !inside;
  }
  return inside;
}

}  // namespace

bool shape_contains(ShapeKind kind, double u, double v) {
  const double r2 = u * u + v * v;
  const double box = std::max(std::fabs(u), std::fabs(v));
  switch (kind) {
    case ShapeKind::Circle: return r2 <= 1.0;
    case ShapeKind::Square: return box <= 0.8;
    case ShapeKind::Triangle: return v >= -0.5 && v <= 1.0 - std::sqrt(3.0) * std::fabs(u);
    case ShapeKind::Cross:
      return (std::fabs(u) <= 0.28 && std::fabs(v) <= 0.95) || (std::fabs(v) <= 0.28 && std::fabs(u) <= 0.95);
    case ShapeKind::Ring: return r2 <= 1.0 && r2 >= 0.36;
    case ShapeKind::Stripes:
      return box <= 0.85 && static_cast<int>(std::floor((v + 0.85) / 0.34)) % 2 == 0;
    case ShapeKind::Checker:
      return box <= 0.85 &&
             (static_cast<int>(std::floor((u + 0.85) / 0.425)) + static_cast<int>(std::floor((v + 0.85) / 0.425))) %
                     2 ==
                 0;
    case ShapeKind::Star: return in_polygon(star_polygon(), u, v);
  }
  return false;
}

Tensor render_shape(ShapeKind kind, std::size_t size, const ShapePose& pose, const std::vector<float>& foreground,
                    const std::vector<float>& background) {
  if (foreground.size() != background.size() || foreground.empty())
    throw ShapeError("render_shape: colour channel mismatch");
  const std::size_t channels = foreground.size();
  constexpr int kSuper = 4;
  const double cosr = std::cos(pose.rotation), sinr = std::sin(pose.rotation);
  Tensor image({channels, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = (static_cast<double>(x) + (sx + 0.5) / kSuper) / static_cast<double>(size) * 2.0 - 1.0;
          const double py = (static_cast<double>(y) + (sy + 0.5) / kSuper) / static_cast<double>(size) * 2.0 - 1.0;
          const double dx = (px - pose.cx) / pose.scale, dy = (py - pose.cy) / pose.scale;
          const double u = cosr * dx + sinr * dy, v = -sinr * dx + cosr * dy;
          hits += shape_contains(kind, u, v) ? 1 : 0;
        }
      const double cover = static_cast<double>(hits) / (kSuper * kSuper);
      for (std::size_t c = 0; c < channels; ++c)
        image[(c * size + y) * size + x] =
            static_cast<float>(cover * foreground[c] + (1.0 - cover) * background[c]);
    }
  return image;
}

std::vector<LabeledImage> generate_shapes(const ShapesSpec& spec, std::size_t n_per_class, std::uint64_t seed) {
  spec.validate();
  if (n_per_class == 0) throw ConfigError("shapes: n_per_class must be at least 1");
  const std::size_t channels = spec.channels();
  const std::uint64_t stream = derive_seed(seed, seed_tag::kShapes);
  const std::size_t total = spec.classes.size() * n_per_class;
  std::vector<LabeledImage> out(total);
  const auto count = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t si = 0; si < count; ++si) {
    const auto idx = static_cast<std::size_t>(si);
    const std::size_t label = idx / n_per_class;
    std::mt19937_64 rng(item_seed(stream, idx));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ShapePose pose;
    pose.cx = (2 * unit(rng) - 1) * spec.position_jitter;
    pose.cy = (2 * unit(rng) - 1) * spec.position_jitter;
    pose.scale = spec.scale_min + unit(rng) * (spec.scale_max - spec.scale_min);
    pose.rotation = (2 * unit(rng) - 1) * spec.rotation_jitter;
    std::vector<float> fg(channels), bg(channels);
    // Resample until the two colours differ clearly in mean intensity.
    for (;;) {
      double mf = 0, mb = 0;
      for (std::size_t c = 0; c < channels; ++c) {
        fg[c] = static_cast<float>(unit(rng));
        bg[c] = static_cast<float>(unit(rng));
        mf += fg[c];
        mb += bg[c];
      }
      if (std::fabs(mf - mb) / static_cast<double>(channels) >= 0.3) break;
    }
    Tensor image = render_shape(parse_shape_kind(spec.classes[label]), spec.size, pose, fg, bg);
    if (spec.noise_std > 0) {
      std::normal_distribution<double> noise(0.0, spec.noise_std);
      for (auto& v : image.data()) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
    }
    out[idx] = LabeledImage{std::move(image), label, spec.classes[label] + "_" + std::to_string(idx % n_per_class)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Textures

const std::vector<std::string>& all_texture_names() {
  static const std::vector<std::string> names{"waves", "blotches", "hatching", "dots"};
  return names;
}

TextureKind parse_texture_kind(const std::string& name) {
  const auto& names = all_texture_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<TextureKind>(i);
  throw ConfigError("unknown texture '" + name + "'");
}

Tensor render_texture(TextureKind kind, std::size_t size, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, seed_tag::kTexture));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto colour = [&] {
    std::vector<double> c(channels);
    for (auto& v : c) v = unit(rng);
    return c;
  };
  const auto a = colour(), b = colour();
  Tensor image({channels, size, size});
  auto put = [&](std::size_t x, std::size_t y, double t) {
    for (std::size_t c = 0; c < channels; ++c)
      image[(c * size + y) * size + x] = static_cast<float>(std::clamp(a[c] * (1 - t) + b[c] * t, 0.0, 1.0));
  };
  const double s = static_cast<double>(size);
  switch (kind) {
    case TextureKind::Waves: {
      const double angle = unit(rng) * std::numbers::pi;
      const double freq = 3.0 + 3.0 * unit(rng);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double p = (std::cos(angle) * x + std::sin(angle) * y) / s;
          const double wobble = 0.15 * std::sin(2 * std::numbers::pi * 2.0 * y / s);
          put(x, y, 0.5 + 0.5 * std::sin(2 * std::numbers::pi * freq * (p + wobble)));
        }
      break;
    }
    case TextureKind::Blotches: {
      std::vector<std::array<double, 4>> blobs(24);
      for (auto& bl : blobs) bl = {unit(rng) * s, unit(rng) * s, (0.05 + 0.1 * unit(rng)) * s, unit(rng)};
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          double t = 0.5;
          for (const auto& bl : blobs) {
            const double d2 = (x - bl[0]) * (x - bl[0]) + (y - bl[1]) * (y - bl[1]);
            const double w = std::exp(-d2 / (2 * bl[2] * bl[2]));
            t = t * (1 - w) + bl[3] * w;
          }
          put(x, y, t);
        }
      break;
    }
    case TextureKind::Hatching: {
      const double period = 3.0 + 2.0 * unit(rng);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const bool d1 = std::fmod(static_cast<double>(x + y), period) < 1.0;
          const bool d2 = std::fmod(static_cast<double>(x + size - y), 2 * period) < 1.0;
          put(x, y, d1 || d2 ? 1.0 : 0.0);
        }
      break;
    }
    case TextureKind::Dots: {
      const double period = 4.0 + 2.0 * unit(rng);
      const double radius = period * (0.2 + 0.15 * unit(rng));
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double fx = std::fmod(x + 0.5, period) - period / 2, fy = std::fmod(y + 0.5, period) - period / 2;
          put(x, y, std::clamp(radius + 0.5 - std::sqrt(fx * fx + fy * fy), 0.0, 1.0));
        }
      break;
    }
  }
  return image;
}

}  // namespace sopt
