#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sopt/autodiff.hpp"
#include "sopt/tensor.hpp"

namespace sopt {

// Image parameterizations. Each maps a flat parameter tensor to a
// C x H x W image in [0, 1] through a differentiable decoder; finalize()
// then applies the hard constraint of the medium.

enum class StrokePrimitive { Disc, Segment };

// Stroke parameters, stored raw: colours and opacity pass through a logistic.
struct Stroke {
  StrokePrimitive primitive = StrokePrimitive::Disc;
  float x0 = 0, y0 = 0;  // pixel units, pixel centres at i + 0.5
  float x1 = 0, y1 = 0;  // segment end (unused by discs)
  float size = 1;        // disc radius or segment half-width
  std::array<float, 3> color_raw{};
  float opacity_raw = 0;
};

inline constexpr std::size_t kStrokeParams = 9;
inline constexpr double kStrokeEdge = 1.0;  // soft edge width in pixels

struct ParamSpec;

namespace param {
struct Pixel {
  std::size_t channels = 3, height = 32, width = 32;
};
// Real and imaginary parts of a half spectrum (C x H x (W/2+1) x 2), scaled
// by 1/max(f, f0) before an orthonormal inverse real 2-D DFT.
struct Frequency {
  std::size_t channels = 3, height = 32, width = 32;
};
// One ink value per cell, monochrome, replicated to `channels`.
struct Halftone {
  std::size_t grid_height = 16, grid_width = 16, cell = 2;
  std::size_t channels = 3;
  double temperature = 1.0;
};
struct Strokes {
  std::vector<StrokePrimitive> primitives;  // one per stroke
  std::array<float, 3> background{1.0f, 1.0f, 1.0f};
  std::size_t channels = 3, height = 32, width = 32;
};
// k free colours; every pixel of the inner image is softly assigned to its
// nearest colour, then blocks of stroke_size pixels are upsampled.
struct Palette {
  std::size_t colors = 4;
  std::size_t stroke_size = 2;
  double temperature = 0.05;
  std::shared_ptr<const ParamSpec> inner;
};
}  // namespace param

struct ParamSpec {
  std::variant<param::Pixel, param::Frequency, param::Halftone, param::Strokes, param::Palette> kind;
};

std::string param_kind_name(const ParamSpec& spec);
Shape image_shape(const ParamSpec& spec);
std::size_t param_count(const ParamSpec& spec);
void validate_spec(const ParamSpec& spec);

struct Parameterization {
  ParamSpec spec;
  Tensor params;  // flat, length param_count(spec)
};

// Decoder on a tape. `anneal` multiplies the temperature of relaxed media.
Var decode_on_tape(const ParamSpec& spec, Var params, double anneal = 1.0);
Tensor decode(const Parameterization& p, double anneal = 1.0);

struct CutGrid {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> ink;  // row-major, 1 = ink
};
struct StrokeProgram {
  std::size_t width = 0, height = 0;
  std::array<float, 3> background{};
  struct Item {
    StrokePrimitive primitive;
    float x0, y0, x1, y1, size;
    std::array<float, 3> color;
    float opacity;
  };
  std::vector<Item> items;
};
struct PaletteAssignment {
  std::vector<std::array<float, 3>> colors;
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint32_t> index;  // per inner pixel
};
using MediumDescription = std::variant<std::monostate, CutGrid, StrokeProgram, PaletteAssignment>;

struct Artifact {
  Tensor image;
  MediumDescription medium;
};

Artifact finalize(const Parameterization& p);

// The hard constraint of the medium applied to an image: thresholding for
// Halftone, nearest palette colour for Palette, identity otherwise.
Tensor enforce_constraint(const Parameterization& p, const Tensor& image);

std::string cut_plan_text(const CutGrid& grid);
std::string strokes_svg(const StrokeProgram& program);

enum class InitMode { Noise, FromImage };

class FromImageUnsupported : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Noise: N(0, 0.01) around the neutral point (random strokes for Strokes,
// spread colours for Palette). FromImage: parameters whose decode
// approximates `source`; unsupported for Strokes.
Parameterization init_param(const ParamSpec& spec, InitMode mode, const Tensor* source, std::uint64_t seed);

// True when from_image is an exact inverse of decode (Pixel, Frequency).
bool has_exact_inverse(const ParamSpec& spec);

// Stroke helpers shared with the gradient-free painter.
std::vector<Stroke> unpack_strokes(const param::Strokes& spec, const Tensor& params);
Parameterization append_stroke(const Parameterization& canvas, const Stroke& stroke);
Var rasterize_strokes(const param::Strokes& spec, Var params);
// Composites one stroke over `image` (C x H x W) in place.
void paint_stroke(Tensor& image, const Stroke& stroke);

// Orthonormal real 2-D DFT pair used by the Frequency decoder (no scaling).
Tensor rfft2_ortho(const Tensor& image);     // C x H x W -> C x H x (W/2+1) x 2
Tensor irfft2_ortho(const Tensor& spectrum, std::size_t width);
double frequency_scale(std::size_t ky, std::size_t kx, std::size_t height, std::size_t width);

}  // namespace sopt
