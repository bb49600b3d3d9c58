#include "sopt/paramspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sopt/rng.hpp"

namespace sopt {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

constexpr double kNoiseStd = 0.01;

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double clamp_unit(double v) { return std::clamp(v, 0.01, 0.99); }

const param::Palette& palette_of(const ParamSpec& spec) { return std::get<param::Palette>(spec.kind); }

std::size_t spec_channels(const ParamSpec& spec) { return image_shape(spec)[0]; }

// Cos/sin tables for the separable real inverse DFT.
struct SpectralBasis {
  std::size_t h, w, wh;
  std::vector<double> cy, sy;  // [ky][y]
  std::vector<double> cx, sx;  // [kx][x]
  std::vector<double> weight;  // per kx: 1 for DC and Nyquist columns, else 2
  std::vector<double> scale;   // [ky][kx]
  double norm;

  SpectralBasis(std::size_t height, std::size_t width) : h(height), w(width), wh(width / 2 + 1) {
    cy.resize(h * h);
    sy.resize(h * h);
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t y = 0; y < h; ++y) {
        const double a = 2 * std::numbers::pi * static_cast<double>((k * y) % h) / static_cast<double>(h);
        cy[k * h + y] = std::cos(a);
        sy[k * h + y] = std::sin(a);
      }
    cx.resize(wh * w);
    sx.resize(wh * w);
    for (std::size_t k = 0; k < wh; ++k)
      for (std::size_t x = 0; x < w; ++x) {
        const double a = 2 * std::numbers::pi * static_cast<double>((k * x) % w) / static_cast<double>(w);
        cx[k * w + x] = std::cos(a);
        sx[k * w + x] = std::sin(a);
      }
    weight.assign(wh, 2.0);
    weight[0] = 1.0;
    if (w % 2 == 0) weight[wh - 1] = 1.0;
    scale.resize(h * wh);
    for (std::size_t ky = 0; ky < h; ++ky)
      for (std::size_t kx = 0; kx < wh; ++kx) scale[ky * wh + kx] = frequency_scale(ky, kx, h, w);
    norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  }

  // spectrum (re, im pairs) -> image, one channel
  void inverse(const double* spec, double* image) const {
    std::vector<double> are(h * wh, 0.0), aim(h * wh, 0.0);
    for (std::size_t ky = 0; ky < h; ++ky)
      for (std::size_t kx = 0; kx < wh; ++kx) {
        const double re = spec[(ky * wh + kx) * 2], im = spec[(ky * wh + kx) * 2 + 1];
        if (re == 0.0 && im == 0.0) continue;
        for (std::size_t y = 0; y < h; ++y) {
          const double c = cy[ky * h + y], s = sy[ky * h + y];
          are[y * wh + kx] += re * c - im * s;
          aim[y * wh + kx] += re * s + im * c;
        }
      }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.0;
        for (std::size_t kx = 0; kx < wh; ++kx)
          v += weight[kx] * (are[y * wh + kx] * cx[kx * w + x] - aim[y * wh + kx] * sx[kx * w + x]);
        image[y * w + x] = v * norm;
      }
  }

  // Adjoint of inverse(): image gradient -> spectrum gradient.
  void inverse_adjoint(const double* grad, double* spec_grad) const {
    std::vector<double> gre(h * wh, 0.0), gim(h * wh, 0.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t kx = 0; kx < wh; ++kx) {
        double r = 0.0, i = 0.0;
        for (std::size_t x = 0; x < w; ++x) {
          r += grad[y * w + x] * cx[kx * w + x];
          i -= grad[y * w + x] * sx[kx * w + x];
        }
        gre[y * wh + kx] = r * weight[kx] * norm;
        gim[y * wh + kx] = i * weight[kx] * norm;
      }
    for (std::size_t ky = 0; ky < h; ++ky)
      for (std::size_t kx = 0; kx < wh; ++kx) {
        double re = 0.0, im = 0.0;
        for (std::size_t y = 0; y < h; ++y) {
          const double c = cy[ky * h + y], s = sy[ky * h + y];
          re += gre[y * wh + kx] * c + gim[y * wh + kx] * s;
          im += -gre[y * wh + kx] * s + gim[y * wh + kx] * c;
        }
        spec_grad[(ky * wh + kx) * 2] = re;
        spec_grad[(ky * wh + kx) * 2 + 1] = im;
      }
  }
};

Var frequency_to_logits(const param::Frequency& f, Var params) {
  const auto basis = std::make_shared<SpectralBasis>(f.height, f.width);
  const std::size_t per_channel = f.height * basis->wh * 2;
  const Tensor& raw = params.value();
  Tensor out({f.channels, f.height, f.width});
  std::vector<double> spec(per_channel), img(f.height * f.width);
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t j = 0; j < per_channel; ++j) spec[j] = static_cast<double>(raw[c * per_channel + j]) * basis->scale[j / 2];
    basis->inverse(spec.data(), img.data());
    for (std::size_t j = 0; j < img.size(); ++j) out[c * img.size() + j] = static_cast<float>(img[j]);
  }
  return params.tape->record(
      std::move(out), {params},
      [params, basis, f, per_channel](Tape& tape, std::span<const float> dy) {
        const std::size_t plane = f.height * f.width;
        std::vector<double> g(plane), sg(per_channel), dx(f.channels * per_channel);
        for (std::size_t c = 0; c < f.channels; ++c) {
          for (std::size_t j = 0; j < plane; ++j) g[j] = dy[c * plane + j];
          basis->inverse_adjoint(g.data(), sg.data());
          for (std::size_t j = 0; j < per_channel; ++j) dx[c * per_channel + j] = sg[j] * basis->scale[j / 2];
        }
        tape.accumulate(params, std::span<const double>(dx));
      },
      "frequency_decode");
}

// Soft nearest-colour assignment: out[:, p] = sum_j softmax_j(-|x_p - P_j|^2 / T) P_j
Var soft_palette(Var image, Var colors, double temperature) {
  const Tensor& x = image.value();
  const Tensor& pal = colors.value();
  const std::size_t ch = x.dim(0), n = x.dim(1) * x.dim(2), k = pal.dim(0);
  Tensor out(x.shape());
  auto weights = std::make_shared<std::vector<double>>(n * k);
  std::vector<double> logits(k);
  for (std::size_t p = 0; p < n; ++p) {
    double mx = -1e300;
    for (std::size_t j = 0; j < k; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < ch; ++c) {
        const double diff = static_cast<double>(x[c * n + p]) - pal[j * ch + c];
        d += diff * diff;
      }
      logits[j] = -d / temperature;
      mx = std::max(mx, logits[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += logits[j] = std::exp(logits[j] - mx);
    for (std::size_t j = 0; j < k; ++j) (*weights)[p * k + j] = logits[j] / total;
    for (std::size_t c = 0; c < ch; ++c) {
      double v = 0.0;
      for (std::size_t j = 0; j < k; ++j) v += (*weights)[p * k + j] * pal[j * ch + c];
      out[c * n + p] = static_cast<float>(v);
    }
  }
  return image.tape->record(
      std::move(out), {image, colors},
      [image, colors, weights, ch, n, k, temperature](Tape& tape, std::span<const float> g) {
        const Tensor& x = image.value();
        const Tensor& pal = colors.value();
        std::vector<double> dx(ch * n, 0.0), dpal(k * ch, 0.0), dw(k), da(k);
        for (std::size_t p = 0; p < n; ++p) {
          const double* w = weights->data() + p * k;
          double wsum = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < ch; ++c) s += static_cast<double>(g[c * n + p]) * pal[j * ch + c];
            dw[j] = s;
            wsum += w[j] * s;
          }
          for (std::size_t j = 0; j < k; ++j) da[j] = w[j] * (dw[j] - wsum);
          for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < ch; ++c) {
              const double diff = static_cast<double>(x[c * n + p]) - pal[j * ch + c];
              dx[c * n + p] += da[j] * (-2.0 * diff / temperature);
              dpal[j * ch + c] += w[j] * g[c * n + p] + da[j] * (2.0 * diff / temperature);
            }
        }
        tape.accumulate(image, std::span<const double>(dx));
        tape.accumulate(colors, std::span<const double>(dpal));
      },
      "soft_palette");
}

std::vector<std::array<float, 3>> palette_colors(const param::Palette& pal, std::size_t channels, const Tensor& params) {
  std::vector<std::array<float, 3>> out(pal.colors);
  for (std::size_t j = 0; j < pal.colors; ++j)
    for (std::size_t c = 0; c < channels; ++c)
      out[j][c] = static_cast<float>(logistic(params[j * channels + c]));
  return out;
}

std::size_t nearest_color(const std::vector<std::array<float, 3>>& colors, const Tensor& image, std::size_t channels,
                          std::size_t plane, std::size_t p) {
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t j = 0; j < colors.size(); ++j) {
    double d = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const double diff = static_cast<double>(image[c * plane + p]) - colors[j][c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

Tensor upsample_image(const Tensor& image, std::size_t factor) {
  Tape tape;
  return upsample_nearest(tape.constant(image), factor).value();
}

Tensor inner_params(const Parameterization& p) {
  const auto& pal = palette_of(p.spec);
  const std::size_t offset = pal.colors * spec_channels(p.spec);
  const std::size_t count = param_count(*pal.inner);
  std::vector<float> data(p.params.vec().begin() + static_cast<std::ptrdiff_t>(offset),
                          p.params.vec().begin() + static_cast<std::ptrdiff_t>(offset + count));
  return Tensor({count}, std::move(data));
}

}  // namespace

double frequency_scale(std::size_t ky, std::size_t kx, std::size_t height, std::size_t width) {
  const double fy = (ky < (height + 1) / 2 ? static_cast<double>(ky) : static_cast<double>(ky) - static_cast<double>(height)) /
                    static_cast<double>(height);
  const double fx = static_cast<double>(kx) / static_cast<double>(width);
  const double f0 = 1.0 / static_cast<double>(std::max(height, width));
  return 1.0 / std::max(std::sqrt(fy * fy + fx * fx), f0);
}

Tensor rfft2_ortho(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("rfft2_ortho: image must be C x H x W");
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2), wh = w / 2 + 1;
  const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  Tensor out({ch, h, wh, 2});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t ky = 0; ky < h; ++ky)
      for (std::size_t kx = 0; kx < wh; ++kx) {
        double re = 0.0, im = 0.0;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const double a = 2 * std::numbers::pi *
                             (static_cast<double>((ky * y) % h) / static_cast<double>(h) +
                              static_cast<double>((kx * x) % w) / static_cast<double>(w));
            const double v = image[(c * h + y) * w + x];
            re += v * std::cos(a);
            im -= v * std::sin(a);
          }
        out[((c * h + ky) * wh + kx) * 2] = static_cast<float>(re * norm);
        out[((c * h + ky) * wh + kx) * 2 + 1] = static_cast<float>(im * norm);
      }
  return out;
}

Tensor irfft2_ortho(const Tensor& spectrum, std::size_t width) {
  if (spectrum.rank() != 4 || spectrum.dim(3) != 2 || spectrum.dim(2) != width / 2 + 1)
    throw ShapeError("irfft2_ortho: spectrum must be C x H x (W/2+1) x 2");
  const std::size_t ch = spectrum.dim(0), h = spectrum.dim(1);
  SpectralBasis basis(h, width);
  const std::size_t per_channel = h * basis.wh * 2;
  Tensor out({ch, h, width});
  std::vector<double> spec(per_channel), img(h * width);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t j = 0; j < per_channel; ++j) spec[j] = spectrum[c * per_channel + j];
    basis.inverse(spec.data(), img.data());
    for (std::size_t j = 0; j < img.size(); ++j) out[c * img.size() + j] = static_cast<float>(img[j]);
  }
  return out;
}

std::string param_kind_name(const ParamSpec& spec) {
  static const char* names[] = {"pixel", "frequency", "halftone", "strokes", "palette"};
  return names[spec.kind.index()];
}

Shape image_shape(const ParamSpec& spec) {
  return std::visit(Overloaded{
                        [](const param::Pixel& p) { return Shape{p.channels, p.height, p.width}; },
                        [](const param::Frequency& p) { return Shape{p.channels, p.height, p.width}; },
                        [](const param::Halftone& p) {
                          return Shape{p.channels, p.grid_height * p.cell, p.grid_width * p.cell};
                        },
                        [](const param::Strokes& p) { return Shape{p.channels, p.height, p.width}; },
                        [](const param::Palette& p) {
                          if (!p.inner) throw ConfigError("palette: missing inner parameterization");
                          Shape s = image_shape(*p.inner);
                          return Shape{s[0], s[1] * p.stroke_size, s[2] * p.stroke_size};
                        },
                    },
                    spec.kind);
}

std::size_t param_count(const ParamSpec& spec) {
  return std::visit(Overloaded{
                        [](const param::Pixel& p) { return p.channels * p.height * p.width; },
                        [](const param::Frequency& p) { return p.channels * p.height * (p.width / 2 + 1) * 2; },
                        [](const param::Halftone& p) { return p.grid_height * p.grid_width; },
                        [](const param::Strokes& p) { return p.primitives.size() * kStrokeParams; },
                        [&](const param::Palette& p) {
                          return p.colors * image_shape(*p.inner)[0] + param_count(*p.inner);
                        },
                    },
                    spec.kind);
}

void validate_spec(const ParamSpec& spec) {
  const Shape s = image_shape(spec);
  for (auto d : s)
    if (d == 0) throw ConfigError(param_kind_name(spec) + ": zero image dimension");
  if (s[0] != 1 && s[0] != 3) throw ConfigError(param_kind_name(spec) + ": channels must be 1 or 3");
  if (const auto* f = std::get_if<param::Frequency>(&spec.kind); f && f->width % 2)
    throw ConfigError("frequency: width must be even");
  if (const auto* h = std::get_if<param::Halftone>(&spec.kind); h && !(h->temperature > 0))
    throw ConfigError("halftone: temperature must be positive");
  if (const auto* p = std::get_if<param::Palette>(&spec.kind)) {
    if (p->colors < 1 || p->stroke_size < 1 || !(p->temperature > 0))
      throw ConfigError("palette: colors, stroke_size and temperature must be positive");
    if (std::holds_alternative<param::Palette>(p->inner->kind)) throw ConfigError("palette: inner cannot be a palette");
    validate_spec(*p->inner);
  }
}

bool has_exact_inverse(const ParamSpec& spec) {
  return std::holds_alternative<param::Pixel>(spec.kind) || std::holds_alternative<param::Frequency>(spec.kind);
}

Var decode_on_tape(const ParamSpec& spec, Var params, double anneal) {
  if (params.value().numel() != param_count(spec))
    throw ShapeError(param_kind_name(spec) + ": expected " + std::to_string(param_count(spec)) + " parameters, got " +
                     std::to_string(params.value().numel()));
  return std::visit(
      Overloaded{
          [&](const param::Pixel& p) { return sigmoid(reshape(params, {p.channels, p.height, p.width})); },
          [&](const param::Frequency& f) { return sigmoid(frequency_to_logits(f, params)); },
          [&](const param::Halftone& h) {
            const Var ink = sigmoid(reshape(params, {1, h.grid_height, h.grid_width}), 1.0 / (h.temperature * anneal));
            const Var up = h.cell == 1 ? ink : upsample_nearest(ink, h.cell);
            return h.channels == 1 ? up : repeat_channels(up, h.channels);
          },
          [&](const param::Strokes& s) { return rasterize_strokes(s, params); },
          [&](const param::Palette& p) {
            const std::size_t ch = image_shape(*p.inner)[0];
            const Var colors = sigmoid(slice(params, 0, {p.colors, ch}));
            const Var inner = decode_on_tape(*p.inner, slice(params, p.colors * ch, {param_count(*p.inner)}), anneal);
            const Var assigned = soft_palette(inner, colors, p.temperature * anneal);
            return p.stroke_size == 1 ? assigned : upsample_nearest(assigned, p.stroke_size);
          },
      },
      spec.kind);
}

Tensor decode(const Parameterization& p, double anneal) {
  Tape tape;
  return decode_on_tape(p.spec, tape.constant(p.params), anneal).value();
}

Artifact finalize(const Parameterization& p) {
  if (p.params.numel() != param_count(p.spec)) throw ShapeError(param_kind_name(p.spec) + ": parameter count mismatch");
  return std::visit(
      Overloaded{
          [&](const param::Pixel&) { return Artifact{decode(p), std::monostate{}}; },
          [&](const param::Frequency&) { return Artifact{decode(p), std::monostate{}}; },
          [&](const param::Halftone& h) {
            CutGrid grid{h.grid_height, h.grid_width, std::vector<std::uint8_t>(h.grid_height * h.grid_width)};
            const std::size_t hh = h.grid_height * h.cell, ww = h.grid_width * h.cell;
            Tensor image({h.channels, hh, ww});
            for (std::size_t i = 0; i < grid.ink.size(); ++i) grid.ink[i] = p.params[i] >= 0.0f ? 1 : 0;
            for (std::size_t c = 0; c < h.channels; ++c)
              for (std::size_t y = 0; y < hh; ++y)
                for (std::size_t x = 0; x < ww; ++x)
                  image[(c * hh + y) * ww + x] = grid.ink[(y / h.cell) * h.grid_width + x / h.cell] ? 1.0f : 0.0f;
            return Artifact{std::move(image), grid};
          },
          [&](const param::Strokes& s) {
            StrokeProgram prog{s.width, s.height, s.background, {}};
            for (const auto& st : unpack_strokes(s, p.params)) {
              StrokeProgram::Item item{st.primitive, st.x0, st.y0, st.x1, st.y1, st.size, {}, 0.0f};
              for (std::size_t c = 0; c < 3; ++c) item.color[c] = static_cast<float>(logistic(st.color_raw[c]));
              item.opacity = static_cast<float>(logistic(st.opacity_raw));
              prog.items.push_back(item);
            }
            return Artifact{decode(p), std::move(prog)};
          },
          [&](const param::Palette& pal) {
            const std::size_t ch = image_shape(*pal.inner)[0];
            const Parameterization inner{*pal.inner, inner_params(p)};
            const Tensor inner_image = finalize(inner).image;
            const auto colors = palette_colors(pal, ch, p.params);
            const std::size_t plane = inner_image.dim(1) * inner_image.dim(2);
            PaletteAssignment assign{colors, inner_image.dim(1), inner_image.dim(2), std::vector<std::uint32_t>(plane)};
            Tensor snapped(inner_image.shape());
            for (std::size_t q = 0; q < plane; ++q) {
              const auto j = nearest_color(colors, inner_image, ch, plane, q);
              assign.index[q] = static_cast<std::uint32_t>(j);
              for (std::size_t c = 0; c < ch; ++c) snapped[c * plane + q] = colors[j][c];
            }
            return Artifact{upsample_image(snapped, pal.stroke_size), std::move(assign)};
          },
      },
      p.spec.kind);
}

Tensor enforce_constraint(const Parameterization& p, const Tensor& image) {
  Tensor out = image;
  if (std::holds_alternative<param::Halftone>(p.spec.kind)) {
    for (auto& v : out.data()) v = v >= 0.5f ? 1.0f : 0.0f;
  } else if (const auto* pal = std::get_if<param::Palette>(&p.spec.kind)) {
    const std::size_t ch = image.dim(0), plane = image.dim(1) * image.dim(2);
    const auto colors = palette_colors(*pal, ch, p.params);
    for (std::size_t q = 0; q < plane; ++q) {
      const auto j = nearest_color(colors, image, ch, plane, q);
      for (std::size_t c = 0; c < ch; ++c) out[c * plane + q] = colors[j][c];
    }
  }
  return out;
}

std::string cut_plan_text(const CutGrid& grid) {
  std::string out;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) out += grid.ink[r * grid.cols + c] ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string strokes_svg(const StrokeProgram& program) {
  auto rgb = [](const std::array<float, 3>& c) {
    std::ostringstream os;
    os << "rgb(" << std::lround(c[0] * 255) << ',' << std::lround(c[1] * 255) << ',' << std::lround(c[2] * 255) << ')';
    return os.str();
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << program.width << "\" height=\"" << program.height
     << "\" viewBox=\"0 0 " << program.width << ' ' << program.height << "\">\n";
  os << "  <rect width=\"" << program.width << "\" height=\"" << program.height << "\" fill=\"" << rgb(program.background)
     << "\"/>\n";
  for (const auto& it : program.items) {
    if (it.primitive == StrokePrimitive::Disc) {
      os << "  <circle cx=\"" << it.x0 << "\" cy=\"" << it.y0 << "\" r=\"" << std::max(0.0f, it.size) << "\" fill=\""
         << rgb(it.color) << "\" fill-opacity=\"" << it.opacity << "\"/>\n";
    } else {
      os << "  <line x1=\"" << it.x0 << "\" y1=\"" << it.y0 << "\" x2=\"" << it.x1 << "\" y2=\"" << it.y1
         << "\" stroke=\"" << rgb(it.color) << "\" stroke-width=\"" << 2 * std::max(0.0f, it.size)
         << "\" stroke-linecap=\"round\" stroke-opacity=\"" << it.opacity << "\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

Parameterization init_param(const ParamSpec& spec, InitMode mode, const Tensor* source, std::uint64_t seed) {
  validate_spec(spec);
  const Shape shape = image_shape(spec);
  if (mode == InitMode::FromImage) {
    if (std::holds_alternative<param::Strokes>(spec.kind))
      throw FromImageUnsupported("strokes: no faithful inverse from an image; use the blackbox painter");
    if (!source) throw ConfigError("from_image initialization needs a source image");
    if (source->shape() != shape)
      throw ShapeError("from_image: source " + shape_str(source->shape()) + " does not match " + shape_str(shape));
  }
  std::mt19937_64 rng(derive_seed(seed, seed_tag::kParamInit));
  std::normal_distribution<double> noise(0.0, kNoiseStd);
  Tensor params({std::max<std::size_t>(param_count(spec), 1)});
  if (param_count(spec) == 0) params = Tensor();

  std::visit(
      Overloaded{
          [&](const param::Pixel&) {
            for (std::size_t i = 0; i < params.numel(); ++i)
              params[i] = mode == InitMode::Noise ? static_cast<float>(noise(rng))
                                                  : static_cast<float>(logit(clamp_unit((*source)[i])));
          },
          [&](const param::Frequency& f) {
            if (mode == InitMode::Noise) {
              for (auto& v : params.data()) v = static_cast<float>(noise(rng));
              return;
            }
            Tensor logits = *source;
            for (auto& v : logits.data()) v = static_cast<float>(logit(clamp_unit(v)));
            const Tensor spectrum = rfft2_ortho(logits);
            const std::size_t wh = f.width / 2 + 1;
            for (std::size_t i = 0; i < spectrum.numel(); ++i) {
              const std::size_t bin = (i / 2) % (f.height * wh);
              params[i] = static_cast<float>(spectrum[i] / frequency_scale(bin / wh, bin % wh, f.height, f.width));
            }
          },
          [&](const param::Halftone& h) {
            const std::size_t hh = h.grid_height * h.cell, ww = h.grid_width * h.cell;
            for (std::size_t gy = 0; gy < h.grid_height; ++gy)
              for (std::size_t gx = 0; gx < h.grid_width; ++gx) {
                if (mode == InitMode::Noise) {
                  params[gy * h.grid_width + gx] = static_cast<float>(noise(rng));
                  continue;
                }
                double mean = 0.0;
                for (std::size_t c = 0; c < h.channels; ++c)
                  for (std::size_t y = gy * h.cell; y < (gy + 1) * h.cell; ++y)
                    for (std::size_t x = gx * h.cell; x < (gx + 1) * h.cell; ++x) mean += (*source)[(c * hh + y) * ww + x];
                mean /= static_cast<double>(h.channels * h.cell * h.cell);
                params[gy * h.grid_width + gx] = static_cast<float>(logit(clamp_unit(mean)) * h.temperature);
              }
          },
          [&](const param::Strokes& s) {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t i = 0; i < s.primitives.size(); ++i) {
              float* q = params.data().data() + i * kStrokeParams;
              const double w = static_cast<double>(s.width), hgt = static_cast<double>(s.height);
              q[0] = static_cast<float>(unit(rng) * w);
              q[1] = static_cast<float>(unit(rng) * hgt);
              q[2] = static_cast<float>(q[0] + (unit(rng) - 0.5) * w / 4);
              q[3] = static_cast<float>(q[1] + (unit(rng) - 0.5) * hgt / 4);
              q[4] = static_cast<float>(1.0 + unit(rng) * std::max(w, hgt) / 8);
              for (int c = 5; c < 9; ++c) q[c] = static_cast<float>(noise(rng));
            }
          },
          [&](const param::Palette& pal) {
            const std::size_t ch = shape[0];
            const std::size_t offset = pal.colors * ch;
            Tensor inner_source;
            if (mode == InitMode::FromImage) {
              const Shape is = image_shape(*pal.inner);
              inner_source = Tensor(is);
              const std::size_t b = pal.stroke_size;
              for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t y = 0; y < is[1]; ++y)
                  for (std::size_t x = 0; x < is[2]; ++x) {
                    double m = 0.0;
                    for (std::size_t dy = 0; dy < b; ++dy)
                      for (std::size_t dx = 0; dx < b; ++dx) m += (*source)[(c * shape[1] + y * b + dy) * shape[2] + x * b + dx];
                    inner_source[(c * is[1] + y) * is[2] + x] = static_cast<float>(m / static_cast<double>(b * b));
                  }
              // Palette from a few Lloyd iterations seeded at luminance quantiles.
              const std::size_t plane = is[1] * is[2];
              std::vector<std::size_t> order(plane);
              for (std::size_t q = 0; q < plane; ++q) order[q] = q;
              auto lum = [&](std::size_t q) {
                double l = 0;
                for (std::size_t c = 0; c < ch; ++c) l += inner_source[c * plane + q];
                return l;
              };
              std::stable_sort(order.begin(), order.end(), [&](auto a, auto b2) { return lum(a) < lum(b2); });
              std::vector<std::array<double, 3>> centers(pal.colors);
              for (std::size_t j = 0; j < pal.colors; ++j) {
                const std::size_t q = order[std::min(plane - 1, (2 * j + 1) * plane / (2 * pal.colors))];
                for (std::size_t c = 0; c < ch; ++c) centers[j][c] = inner_source[c * plane + q];
              }
              for (int iter = 0; iter < 10; ++iter) {
                std::vector<std::array<double, 3>> sum(pal.colors, {0, 0, 0});
                std::vector<std::size_t> count(pal.colors, 0);
                for (std::size_t q = 0; q < plane; ++q) {
                  std::size_t best = 0;
                  double bd = 1e300;
                  for (std::size_t j = 0; j < pal.colors; ++j) {
                    double d = 0;
                    for (std::size_t c = 0; c < ch; ++c) d += std::pow(inner_source[c * plane + q] - centers[j][c], 2);
                    if (d < bd) bd = d, best = j;
                  }
                  ++count[best];
                  for (std::size_t c = 0; c < ch; ++c) sum[best][c] += inner_source[c * plane + q];
                }
                for (std::size_t j = 0; j < pal.colors; ++j)
                  if (count[j])
                    for (std::size_t c = 0; c < ch; ++c) centers[j][c] = sum[j][c] / static_cast<double>(count[j]);
              }
              for (std::size_t j = 0; j < pal.colors; ++j)
                for (std::size_t c = 0; c < ch; ++c) params[j * ch + c] = static_cast<float>(logit(clamp_unit(centers[j][c])));
            } else {
              std::uniform_real_distribution<double> spread(-2.0, 2.0);
              for (std::size_t i = 0; i < offset; ++i) params[i] = static_cast<float>(spread(rng));
            }
            const Parameterization inner = init_param(*pal.inner, mode, mode == InitMode::FromImage ? &inner_source : nullptr,
                                                      derive_seed(seed, 1));
            std::copy(inner.params.vec().begin(), inner.params.vec().end(),
                      params.data().begin() + static_cast<std::ptrdiff_t>(offset));
          },
      },
      spec.kind);
  return Parameterization{spec, std::move(params)};
}

}  // namespace sopt
