#include <algorithm>
#include <cmath>

#include "sopt/paramspace.hpp"

namespace sopt {

namespace {

constexpr double kDistanceEps = 1e-3;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Closest {
  double qx, qy, t;  // closest point on the stroke axis, segment parameter
};

Closest closest_point(const Stroke& s, double px, double py) {
  if (s.primitive == StrokePrimitive::Disc) return {s.x0, s.y0, 0.0};
  const double dx = static_cast<double>(s.x1) - s.x0, dy = static_cast<double>(s.y1) - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return {s.x0 + t * dx, s.y0 + t * dy, t};
}

// Soft coverage sigma((size - d) / edge) with a smoothed distance d.
struct Coverage {
  double value, d;
  Closest q;
};

Coverage coverage(const Stroke& s, double px, double py) {
  const Closest q = closest_point(s, px, py);
  const double rx = px - q.qx, ry = py - q.qy;
  const double d = std::sqrt(rx * rx + ry * ry + kDistanceEps * kDistanceEps);
  return {logistic((s.size - d) / kStrokeEdge), d, q};
}

Stroke stroke_at(const param::Strokes& spec, const float* q, std::size_t i) {
  Stroke s;
  s.primitive = spec.primitives[i];
  s.x0 = q[0];
  s.y0 = q[1];
  s.x1 = q[2];
  s.y1 = q[3];
  s.size = q[4];
  s.color_raw = {q[5], q[6], q[7]};
  s.opacity_raw = q[8];
  return s;
}

Tensor background_image(const param::Strokes& spec) {
  Tensor img({spec.channels, spec.height, spec.width});
  const std::size_t plane = spec.height * spec.width;
  for (std::size_t c = 0; c < spec.channels; ++c)
    std::fill_n(img.data().begin() + static_cast<std::ptrdiff_t>(c * plane), plane, spec.background[c]);
  return img;
}

}  // namespace

std::vector<Stroke> unpack_strokes(const param::Strokes& spec, const Tensor& params) {
  if (params.numel() != spec.primitives.size() * kStrokeParams)
    throw ShapeError("strokes: expected " + std::to_string(spec.primitives.size() * kStrokeParams) + " parameters");
  std::vector<Stroke> out;
  out.reserve(spec.primitives.size());
  for (std::size_t i = 0; i < spec.primitives.size(); ++i)
    out.push_back(stroke_at(spec, params.vec().data() + i * kStrokeParams, i));
  return out;
}

Parameterization append_stroke(const Parameterization& canvas, const Stroke& stroke) {
  const auto* spec = std::get_if<param::Strokes>(&canvas.spec.kind);
  if (!spec) throw ConfigError("append_stroke: canvas is not a strokes parameterization");
  param::Strokes next = *spec;
  next.primitives.push_back(stroke.primitive);
  std::vector<float> data = canvas.params.vec();
  data.insert(data.end(), {stroke.x0, stroke.y0, stroke.x1, stroke.y1, stroke.size, stroke.color_raw[0],
                           stroke.color_raw[1], stroke.color_raw[2], stroke.opacity_raw});
  const std::size_t n = data.size();
  return Parameterization{ParamSpec{next}, Tensor({n}, std::move(data))};
}

void paint_stroke(Tensor& image, const Stroke& s) {
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2), plane = h * w;
  const double opacity = logistic(s.opacity_raw);
  double color[3];
  for (int c = 0; c < 3; ++c) color[c] = logistic(s.color_raw[c]);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double a = opacity * coverage(s, x + 0.5, y + 0.5).value;
      for (std::size_t c = 0; c < ch; ++c) {
        float& v = image[c * plane + y * w + x];
        v = static_cast<float>(v * (1.0 - a) + color[c] * a);
      }
    }
}

Var rasterize_strokes(const param::Strokes& spec, Var params) {
  const std::vector<Stroke> strokes = unpack_strokes(spec, params.value());
  const std::size_t ch = spec.channels, h = spec.height, w = spec.width, plane = h * w;
  // Canvas before each stroke, kept for the backward pass.
  auto history = std::make_shared<std::vector<Tensor>>();
  Tensor image = background_image(spec);
  for (const auto& s : strokes) {
    history->push_back(image);
    paint_stroke(image, s);
  }
  return params.tape->record(
      std::move(image), {params},
      [params, history, strokes, ch, h, w, plane](Tape& tape, std::span<const float> upstream) {
        std::vector<double> g(upstream.begin(), upstream.end());
        std::vector<double> dparams(strokes.size() * kStrokeParams, 0.0);
        for (std::size_t k = strokes.size(); k-- > 0;) {
          const Stroke& s = strokes[k];
          const Tensor& before = (*history)[k];
          const double opacity = logistic(s.opacity_raw);
          double color[3];
          for (int c = 0; c < 3; ++c) color[c] = logistic(s.color_raw[c]);
          double* dp = dparams.data() + k * kStrokeParams;
          double dopacity = 0.0, dcolor[3] = {0, 0, 0};
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const double px = x + 0.5, py = y + 0.5;
              const Coverage cov = coverage(s, px, py);
              const double a = opacity * cov.value;
              double dalpha = 0.0;
              for (std::size_t c = 0; c < ch; ++c) {
                const std::size_t i = c * plane + y * w + x;
                dalpha += g[i] * (color[c] - before[i]);
                dcolor[c] += g[i] * a;
                g[i] *= 1.0 - a;
              }
              if (dalpha == 0.0) continue;
              dopacity += dalpha * cov.value;
              const double dz = dalpha * opacity * cov.value * (1.0 - cov.value) / kStrokeEdge;
              dp[4] += dz;
              // d(d)/dq = (q - p) / d, and d carries a minus sign in z.
              const double gx = -dz * (cov.q.qx - px) / cov.d, gy = -dz * (cov.q.qy - py) / cov.d;
              if (s.primitive == StrokePrimitive::Disc) {
                dp[0] += gx;
                dp[1] += gy;
              } else {
                dp[0] += (1.0 - cov.q.t) * gx;
                dp[1] += (1.0 - cov.q.t) * gy;
                dp[2] += cov.q.t * gx;
                dp[3] += cov.q.t * gy;
              }
            }
          for (std::size_t c = 0; c < ch; ++c) dp[5 + c] = dcolor[c] * color[c] * (1.0 - color[c]);
          dp[8] = dopacity * opacity * (1.0 - opacity);
        }
        tape.accumulate(params, std::span<const double>(dparams));
      },
      "rasterize_strokes");
}

}  // namespace sopt
