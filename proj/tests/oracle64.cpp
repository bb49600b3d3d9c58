#include "oracle64.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

Vec upsample(const Vec& x, std::size_t planes, std::size_t h, std::size_t w, std::size_t f) {
  Vec y(planes * h * f * w * f);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h * f; ++i)
      for (std::size_t j = 0; j < w * f; ++j) y[(p * h * f + i) * w * f + j] = x[(p * h + i / f) * w + j / f];
  return y;
}

double fft_scale(std::size_t ky, std::size_t kx, std::size_t h, std::size_t w) {
  const double fy = (2 * ky < h ? double(ky) : double(ky) - double(h)) / double(h);
  const double fx = double(kx) / double(w);
  return 1.0 / std::max(std::hypot(fy, fx), 1.0 / double(std::max(h, w)));
}

// Full complex inverse DFT of the Hermitian-extended half spectrum.
Vec frequency_logits(const sopt::param::Frequency& f, const Vec& p) {
  const std::size_t h = f.height, w = f.width, wh = w / 2 + 1;
  Vec out(f.channels * h * w, 0.0);
  for (std::size_t c = 0; c < f.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.0;
        for (std::size_t ky = 0; ky < h; ++ky)
          for (std::size_t kx = 0; kx < w; ++kx) {
            // Bins past the Nyquist column are conjugates of mirrored bins.
            double re, im;
            if (kx < wh) {
              const std::size_t at = ((c * h + ky) * wh + kx) * 2;
              re = p[at] * fft_scale(ky, kx, h, w);
              im = p[at + 1] * fft_scale(ky, kx, h, w);
            } else {
              const std::size_t my = (h - ky) % h, mx = w - kx;
              const std::size_t at = ((c * h + my) * wh + mx) * 2;
              re = p[at] * fft_scale(my, mx, h, w);
              im = -p[at + 1] * fft_scale(my, mx, h, w);
            }
            const double a = 2 * std::numbers::pi * (double(ky * y) / double(h) + double(kx * x) / double(w));
            v += re * std::cos(a) - im * std::sin(a);
          }
        out[(c * h + y) * w + x] = v / std::sqrt(double(h * w));
      }
  return out;
}

Vec strokes(const sopt::param::Strokes& s, const Vec& p) {
  const std::size_t plane = s.height * s.width;
  Vec img(s.channels * plane);
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) img[c * plane + i] = s.background[c];
  for (std::size_t k = 0; k < s.primitives.size(); ++k) {
    const double* q = p.data() + k * sopt::kStrokeParams;
    const double opacity = sigmoid(q[8]);
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double cx = q[0], cy = q[1];
        if (s.primitives[k] == sopt::StrokePrimitive::Segment) {
          const double dx = q[2] - q[0], dy = q[3] - q[1], len2 = dx * dx + dy * dy;
          const double t = len2 > 0 ? std::clamp(((px - q[0]) * dx + (py - q[1]) * dy) / len2, 0.0, 1.0) : 0.0;
          cx = q[0] + t * dx;
          cy = q[1] + t * dy;
        }
        const double d = std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy) + 1e-6);
        const double a = opacity * sigmoid((q[4] - d) / sopt::kStrokeEdge);
        for (std::size_t c = 0; c < s.channels; ++c) {
          double& v = img[c * plane + y * s.width + x];
          v = v * (1 - a) + sigmoid(q[5 + c]) * a;
        }
      }
  }
  return img;
}

}  // namespace

Vec to_vec(const sopt::Tensor& t) { return Vec(t.vec().begin(), t.vec().end()); }

Vec conv2d(const Vec& x, const Vec& w, const Vec& b, std::size_t n, std::size_t in_c, std::size_t h, std::size_t wd,
           std::size_t out_c, std::size_t k, std::size_t stride, std::size_t pad) {
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Vec y(n * out_c * oh * ow);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < out_c; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < in_c; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long yy = long(i * stride + u) - long(pad), xx = long(j * stride + v) - long(pad);
                if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(wd)) continue;
                acc += x[((s * in_c + c) * h + yy) * wd + xx] * w[((o * in_c + c) * k + u) * k + v];
              }
          y[((s * out_c + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

Vec maxpool2(const Vec& x, std::size_t planes, std::size_t h, std::size_t w) {
  Vec y(planes * (h / 2) * (w / 2));
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        double m = -INFINITY;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) m = std::max(m, x[(p * h + 2 * i + u) * w + 2 * j + v]);
        y[(p * (h / 2) + i) * (w / 2) + j] = m;
      }
  return y;
}

Vec affine(const Vec& x, const Vec& w, const Vec& b, std::size_t n, std::size_t d, std::size_t m) {
  Vec y(n * m);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < d; ++i) acc += x[s * d + i] * w[i * m + j];
      y[s * m + j] = acc;
    }
  return y;
}

Vec relu(const Vec& x) {
  Vec y(x);
  for (auto& v : y) v = std::max(v, 0.0);
  return y;
}

Vec softmax(const Vec& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= total;
  return p;
}

std::vector<Vec> forward(const sopt::RecognitionNet& net, const Vec& image) {
  std::vector<Vec> acts;
  Vec cur = image;
  std::size_t c = net.input.channels, h = net.input.height, w = net.input.width;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& spec = net.layers[l];
    if (const auto* conv = std::get_if<sopt::layer::Conv>(&spec)) {
      cur = conv2d(cur, to_vec(net.params[l][0]), to_vec(net.params[l][1]), 1, c, h, w, conv->out_channels, conv->kernel,
                   conv->stride, conv->pad);
      h = (h + 2 * conv->pad - conv->kernel) / conv->stride + 1;
      w = (w + 2 * conv->pad - conv->kernel) / conv->stride + 1;
      c = conv->out_channels;
    } else if (std::holds_alternative<sopt::layer::ReLU>(spec)) {
      cur = relu(cur);
    } else if (std::holds_alternative<sopt::layer::MaxPool2>(spec)) {
      cur = maxpool2(cur, c, h, w);
      h /= 2;
      w /= 2;
    } else if (std::holds_alternative<sopt::layer::Flatten>(spec)) {
      c = c * h * w;
      h = w = 1;
    } else if (const auto* dense = std::get_if<sopt::layer::Dense>(&spec)) {
      cur = affine(cur, to_vec(net.params[l][0]), to_vec(net.params[l][1]), 1, c * h * w, dense->out_features);
      c = dense->out_features;
      h = w = 1;
    }
    acts.push_back(cur);
  }
  return acts;
}

std::vector<int> kink_pattern(const sopt::RecognitionNet& net, const Vec& image, std::size_t depth) {
  std::vector<int> pattern;
  Vec cur = image;
  std::size_t c = net.input.channels, h = net.input.height, w = net.input.width;
  for (std::size_t l = 0; l < std::min(depth, net.layers.size()); ++l) {
    const auto& spec = net.layers[l];
    if (const auto* conv = std::get_if<sopt::layer::Conv>(&spec)) {
      cur = conv2d(cur, to_vec(net.params[l][0]), to_vec(net.params[l][1]), 1, c, h, w, conv->out_channels, conv->kernel,
                   conv->stride, conv->pad);
      h = (h + 2 * conv->pad - conv->kernel) / conv->stride + 1;
      w = (w + 2 * conv->pad - conv->kernel) / conv->stride + 1;
      c = conv->out_channels;
    } else if (std::holds_alternative<sopt::layer::ReLU>(spec)) {
      for (double v : cur) pattern.push_back(v > 0);
      cur = relu(cur);
    } else if (std::holds_alternative<sopt::layer::MaxPool2>(spec)) {
      for (std::size_t p = 0; p < c; ++p)
        for (std::size_t i = 0; i < h / 2; ++i)
          for (std::size_t j = 0; j < w / 2; ++j) {
            int best = 0;
            double m = -INFINITY;
            for (int k = 0; k < 4; ++k) {
              const double v = cur[(p * h + 2 * i + std::size_t(k / 2)) * w + 2 * j + std::size_t(k % 2)];
              if (v > m) m = v, best = k;
            }
            pattern.push_back(best);
          }
      cur = maxpool2(cur, c, h, w);
      h /= 2;
      w /= 2;
    } else if (std::holds_alternative<sopt::layer::Flatten>(spec)) {
      c = c * h * w;
      h = w = 1;
    } else if (const auto* dense = std::get_if<sopt::layer::Dense>(&spec)) {
      cur = affine(cur, to_vec(net.params[l][0]), to_vec(net.params[l][1]), 1, c * h * w, dense->out_features);
      c = dense->out_features;
      h = w = 1;
    }
  }
  return pattern;
}

std::vector<int> tv_pattern(const Vec& image, std::size_t planes, std::size_t h, std::size_t w) {
  std::vector<int> pattern;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = image[(p * h + i) * w + j];
        if (i + 1 < h) pattern.push_back(image[(p * h + i + 1) * w + j] > v);
        if (j + 1 < w) pattern.push_back(image[(p * h + i) * w + j + 1] > v);
      }
  return pattern;
}

Vec gram(const Vec& act, std::size_t c, std::size_t plane) {
  Vec g(c * c);
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = 0; b < c; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += act[a * plane + i] * act[b * plane + i];
      g[a * c + b] = acc / double(c * plane);
    }
  return g;
}

double mean_squared_difference(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mean_squared_difference: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / double(a.size());
}

double total_variation(const Vec& image, std::size_t planes, std::size_t h, std::size_t w) {
  double sv = 0.0, sh = 0.0;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = image[(p * h + i) * w + j];
        if (i + 1 < h) sv += std::abs(image[(p * h + i + 1) * w + j] - v);
        if (j + 1 < w) sh += std::abs(image[(p * h + i) * w + j + 1] - v);
      }
  const double tv = h > 1 ? sv / double(planes * (h - 1) * w) : 0.0;
  const double th = w > 1 ? sh / double(planes * h * (w - 1)) : 0.0;
  return tv + th;
}

double term_value(const sopt::ObjectiveTerm& t, const Vec& image, const sopt::RecognitionNet& net) {
  namespace term = sopt::term;
  const auto shapes = net.layer_shapes();
  auto acts = [&] { return forward(net, image); };
  return std::visit(
      Overloaded{
          [&](const term::ClassProbability& c) { return softmax(acts().back())[c.cls]; },
          [&](const term::ClassLogit& c) { return acts().back()[c.cls]; },
          [&](const term::Neuron& n) {
            const auto& s = shapes[n.layer];
            const std::size_t idx = s.size() == 3 ? (n.channel * s[1] + n.y) * s[2] + n.x : n.channel;
            return acts()[n.layer][idx];
          },
          [&](const term::ChannelMean& m) {
            const auto& s = shapes[m.layer];
            const std::size_t plane = s[1] * s[2];
            const Vec a = acts()[m.layer];
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += a[m.channel * plane + i];
            return acc / double(plane);
          },
          [&](const term::LayerL2& l) {
            const Vec a = acts()[l.layer];
            double acc = 0.0;
            for (double v : a) acc += v * v;
            return acc / double(a.size());
          },
          [&](const term::ContentLoss& c) { return mean_squared_difference(acts()[c.layer], to_vec(c.target)); },
          [&](const term::StyleLoss& s) {
            const auto all = acts();
            double acc = 0.0;
            for (const auto& sl : s.signature.layers) {
              const auto& ls = shapes[sl.layer];
              acc += sl.weight *
                     mean_squared_difference(gram(all[sl.layer], ls[0], ls[1] * ls[2]), to_vec(sl.target.matrix));
            }
            return acc;
          },
          [&](const term::TotalVariation&) {
            return total_variation(image, net.input.channels, net.input.height, net.input.width);
          },
          [&](const term::L2Distance& d) {
            const Vec r = to_vec(d.reference);
            double acc = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) acc += (image[i] - r[i]) * (image[i] - r[i]);
            return acc;
          },
      },
      t);
}

double objective(const sopt::CompositeObjective& obj, const Vec& image, const sopt::RecognitionNet& net) {
  double total = 0.0;
  for (const auto& wt : obj.terms) {
    const double sign = wt.direction == sopt::Direction::Maximize ? 1.0 : -1.0;
    total += sign * wt.weight * term_value(wt.term, image, net);
  }
  return total;
}

Vec decode(const sopt::ParamSpec& spec, const Vec& params, double anneal) {
  namespace param = sopt::param;
  return std::visit(
      Overloaded{
          [&](const param::Pixel&) {
            Vec out(params);
            for (auto& v : out) v = sigmoid(v);
            return out;
          },
          [&](const param::Frequency& f) {
            Vec out = frequency_logits(f, params);
            for (auto& v : out) v = sigmoid(v);
            return out;
          },
          [&](const param::Halftone& h) {
            Vec ink(params);
            for (auto& v : ink) v = sigmoid(v / (h.temperature * anneal));
            const Vec up = upsample(ink, 1, h.grid_height, h.grid_width, h.cell);
            Vec out;
            for (std::size_t c = 0; c < h.channels; ++c) out.insert(out.end(), up.begin(), up.end());
            return out;
          },
          [&](const param::Strokes& s) { return strokes(s, params); },
          [&](const param::Palette& p) {
            const auto shape = sopt::image_shape(*p.inner);
            const std::size_t ch = shape[0], plane = shape[1] * shape[2], k = p.colors;
            Vec colors(params.begin(), params.begin() + long(k * ch));
            for (auto& v : colors) v = sigmoid(v);
            const Vec inner = decode(*p.inner, Vec(params.begin() + long(k * ch), params.end()), anneal);
            Vec out(ch * plane);
            const double temp = p.temperature * anneal;
            for (std::size_t q = 0; q < plane; ++q) {
              Vec logit(k);
              for (std::size_t j = 0; j < k; ++j) {
                double d = 0.0;
                for (std::size_t c = 0; c < ch; ++c) d += std::pow(inner[c * plane + q] - colors[j * ch + c], 2);
                logit[j] = -d / temp;
              }
              const Vec w = softmax(logit);
              for (std::size_t c = 0; c < ch; ++c) {
                double v = 0.0;
                for (std::size_t j = 0; j < k; ++j) v += w[j] * colors[j * ch + c];
                out[c * plane + q] = v;
              }
            }
            return upsample(out, ch, shape[1], shape[2], p.stroke_size);
          },
      },
      spec.kind);
}

}  // namespace oracle
