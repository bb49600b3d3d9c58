#include "sopt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sopt/kernels.hpp"

namespace sopt {

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  value.check_finite("leaf");
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  node.is_leaf = true;
  return push(std::move(node));
}

Var Tape::constant(Tensor value) {
  value.check_finite("constant");
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op) {
  value.check_finite(op);
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw Error(std::string(op) + ": input recorded on a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return zeros_like(node.value);
  return Tensor(node.value.shape(), node.grad);
}

std::vector<float>& Tape::grad_storage(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(node.value.numel(), 0.0f);
  return node.grad;
}

void Tape::accumulate(Var v, std::span<const float> delta) {
  if (!nodes_.at(v.id).requires_grad) return;
  auto& g = grad_storage(v.id);
  if (delta.size() != g.size()) throw ShapeError("gradient size mismatch during backward");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tape::accumulate(Var v, std::span<const double> delta) {
  if (!nodes_.at(v.id).requires_grad) return;
  auto& g = grad_storage(v.id);
  if (delta.size() != g.size()) throw ShapeError("gradient size mismatch during backward");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<float>(delta[i]);
}

void Tape::backward(Var output) {
  if (output.tape != this || output.id >= nodes_.size()) throw Error("backward: output is not on this tape");
  if (nodes_[output.id].value.numel() != 1)
    throw ShapeError("backward: output must be scalar, got " + shape_str(nodes_[output.id].value.shape()));
  for (auto& node : nodes_)
    if (!node.is_leaf) node.grad.clear();
  if (!nodes_[output.id].requires_grad) return;
  grad_storage(output.id)[0] += 1.0f;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.is_leaf || !node.backward || node.grad.empty()) continue;
    const std::vector<float> upstream = node.grad;
    node.backward(*this, upstream);
  }
  for (const auto& node : nodes_)
    if (node.is_leaf)
      for (float g : node.grad)
        if (!std::isfinite(g)) throw NumericError("backward produced a non-finite gradient");
}

void Tape::zero_grad() {
  for (auto& node : nodes_) node.grad.clear();
}

// ---------------------------------------------------------------------------
// Network ops

Var conv2d(Var input, Var weights, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor& x = input.value();
  const Tensor& w = weights.value();
  const Tensor& b = bias.value();
  if (x.rank() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(x.shape()));
  if (w.rank() != 4) throw ShapeError("conv2d: weights must be OIKK, got " + shape_str(w.shape()));
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " != weight in-channels " +
                     std::to_string(w.dim(1)));
  if (b.numel() != w.dim(0))
    throw ShapeError("conv2d: bias length " + std::to_string(b.numel()) + " != out-channels " +
                     std::to_string(w.dim(0)));
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad};
  if (g.kernel > g.height + 2 * pad)
    throw ShapeError("conv2d: kernel " + std::to_string(g.kernel) + " exceeds padded height " +
                     std::to_string(g.height + 2 * pad));
  if (g.kernel > g.width + 2 * pad)
    throw ShapeError("conv2d: kernel " + std::to_string(g.kernel) + " exceeds padded width " +
                     std::to_string(g.width + 2 * pad));
  Tensor y({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
  return input.tape->record(
      std::move(y), {input, weights, bias},
      [input, weights, bias, g](Tape& tape, std::span<const float> dy) {
        if (tape.requires_grad(input)) {
          std::vector<float> dx(input.value().numel());
          kernels::conv2d_backward_input(g, weights.value().data(), dy, dx);
          tape.accumulate(input, std::span<const float>(dx));
        }
        if (tape.requires_grad(weights) || tape.requires_grad(bias)) {
          std::vector<float> dw(weights.value().numel()), db(bias.value().numel());
          kernels::conv2d_backward_params(g, input.value().data(), dy, dw, db);
          tape.accumulate(weights, std::span<const float>(dw));
          tape.accumulate(bias, std::span<const float>(db));
        }
      },
      "conv2d");
}

Var max_pool2(Var input) {
  const Tensor& x = input.value();
  if (x.rank() != 4) throw ShapeError("max_pool2: input must be NCHW, got " + shape_str(x.shape()));
  if (x.dim(2) % 2 || x.dim(3) % 2)
    throw ShapeError("max_pool2: spatial dims must be even, got " + shape_str(x.shape()));
  kernels::PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  Tensor y({g.batch, g.channels, g.height / 2, g.width / 2});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.numel());
  kernels::maxpool2_forward(g, x.data(), y.data(), *argmax);
  return input.tape->record(
      std::move(y), {input},
      [input, argmax](Tape& tape, std::span<const float> dy) {
        std::vector<float> dx(input.value().numel(), 0.0f);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
        tape.accumulate(input, std::span<const float>(dx));
      },
      "max_pool2");
}

Var relu(Var input) {
  const Tensor& x = input.value();
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0f ? v : 0.0f;
  return input.tape->record(
      std::move(y), {input},
      [input](Tape& tape, std::span<const float> dy) {
        const auto x = input.value().data();
        std::vector<float> dx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
        tape.accumulate(input, std::span<const float>(dx));
      },
      "relu");
}

Var affine(Var input, Var weights, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weights.value();
  if (x.rank() != 2) throw ShapeError("affine: input must be N x D, got " + shape_str(x.shape()));
  if (w.rank() != 2) throw ShapeError("affine: weights must be D x M, got " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(0))
    throw ShapeError("affine: input dim " + std::to_string(x.dim(1)) + " != weight rows " + std::to_string(w.dim(0)));
  if (bias.value().numel() != w.dim(1))
    throw ShapeError("affine: bias length " + std::to_string(bias.value().numel()) + " != weight cols " +
                     std::to_string(w.dim(1)));
  const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  Tensor y({n, m});
  kernels::affine_forward(n, d, m, x.data(), w.data(), bias.value().data(), y.data());
  return input.tape->record(
      std::move(y), {input, weights, bias},
      [input, weights, bias, n, d, m](Tape& tape, std::span<const float> dy) {
        if (tape.requires_grad(input)) {
          std::vector<float> dx(n * d);
          kernels::affine_backward_input(n, d, m, weights.value().data(), dy, dx);
          tape.accumulate(input, std::span<const float>(dx));
        }
        if (tape.requires_grad(weights) || tape.requires_grad(bias)) {
          std::vector<float> dw(d * m), db(m);
          kernels::affine_backward_params(n, d, m, input.value().data(), dy, dw, db);
          tape.accumulate(weights, std::span<const float>(dw));
          tape.accumulate(bias, std::span<const float>(db));
        }
      },
      "affine");
}

Var reshape(Var input, Shape shape) {
  Tensor y = input.value().reshaped(std::move(shape));
  return input.tape->record(
      std::move(y), {input}, [input](Tape& tape, std::span<const float> dy) { tape.accumulate(input, dy); },
      "reshape");
}

Var slice(Var input, std::size_t offset, Shape shape) {
  const Tensor& x = input.value();
  const std::size_t count = shape_numel(shape);
  if (offset + count > x.numel())
    throw ShapeError("slice: [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                     ") exceeds " + std::to_string(x.numel()) + " elements");
  std::vector<float> data(x.vec().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.vec().begin() + static_cast<std::ptrdiff_t>(offset + count));
  return input.tape->record(
      Tensor(std::move(shape), std::move(data)), {input},
      [input, offset](Tape& tape, std::span<const float> dy) {
        std::vector<float> dx(input.value().numel(), 0.0f);
        std::copy(dy.begin(), dy.end(), dx.begin() + static_cast<std::ptrdiff_t>(offset));
        tape.accumulate(input, std::span<const float>(dx));
      },
      "slice");
}

Var flatten(Var input) {
  const Tensor& x = input.value();
  return reshape(input, {x.dim(0), x.numel() / x.dim(0)});
}

SoftmaxCrossEntropy softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be N x K, got " + shape_str(z.shape()));
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  for (auto label : labels)
    if (label >= k)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(k) + ")");
  Tensor probs({n, k});
  double loss = 0.0;
  std::vector<double> row(k);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(z[i * k + j]));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += row[j] = std::exp(static_cast<double>(z[i * k + j]) - mx);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = static_cast<float>(row[j] / total);
    loss -= (static_cast<double>(z[i * k + labels[i]]) - mx) - std::log(total);
  }
  loss /= static_cast<double>(n);
  auto p = std::make_shared<Tensor>(probs);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  Var out = logits.tape->record(
      Tensor({1}, std::vector<float>{static_cast<float>(loss)}), {logits},
      [logits, p, lab, n, k](Tape& tape, std::span<const float> dy) {
        std::vector<double> dz(n * k);
        const double g = dy[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j)
            dz[i * k + j] = g * ((*p)[i * k + j] - (j == lab[i] ? 1.0 : 0.0));
        tape.accumulate(logits, std::span<const double>(dz));
      },
      "softmax_cross_entropy");
  return {out, std::move(probs)};
}

Var softmax(Var logits) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("softmax: logits must be N x K, got " + shape_str(z.shape()));
  const std::size_t n = z.dim(0), k = z.dim(1);
  Tensor p({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(z[i * k + j]));
    double total = 0.0;
    std::vector<double> e(k);
    for (std::size_t j = 0; j < k; ++j) total += e[j] = std::exp(static_cast<double>(z[i * k + j]) - mx);
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<float>(e[j] / total);
  }
  auto out = std::make_shared<Tensor>(p);
  return logits.tape->record(
      std::move(p), {logits},
      [logits, out, n, k](Tape& tape, std::span<const float> dy) {
        const Tensor& p = *out;
        std::vector<double> dz(n * k);
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(dy[i * k + j]) * p[i * k + j];
          for (std::size_t j = 0; j < k; ++j) dz[i * k + j] = p[i * k + j] * (dy[i * k + j] - dot);
        }
        tape.accumulate(logits, std::span<const double>(dz));
      },
      "softmax");
}

// ---------------------------------------------------------------------------
// Reductions

namespace {
Tensor scalar(double v) { return Tensor({1}, std::vector<float>{static_cast<float>(v)}); }
}  // namespace

Var sum(Var input) {
  double total = 0.0;
  for (float v : input.value().data()) total += v;
  return input.tape->record(
      scalar(total), {input},
      [input](Tape& tape, std::span<const float> dy) {
        tape.accumulate(input, std::span<const float>(std::vector<float>(input.value().numel(), dy[0])));
      },
      "sum");
}

Var mean_square(Var input) {
  const auto x = input.value().data();
  double total = 0.0;
  for (float v : x) total += static_cast<double>(v) * v;
  const double n = static_cast<double>(x.size());
  return input.tape->record(
      scalar(total / n), {input},
      [input, n](Tape& tape, std::span<const float> dy) {
        const auto x = input.value().data();
        std::vector<double> dx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = 2.0 * dy[0] * x[i] / n;
        tape.accumulate(input, std::span<const double>(dx));
      },
      "mean_square");
}

namespace {
Var squared_difference(Var a, Var b, bool mean, std::string_view op) {
  if (a.value().shape() != b.value().shape())
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.value().shape()) + " vs " +
                     shape_str(b.value().shape()));
  const auto x = a.value().data(), y = b.value().data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    total += d * d;
  }
  const double norm = mean ? static_cast<double>(x.size()) : 1.0;
  return a.tape->record(
      scalar(total / norm), {a, b},
      [a, b, norm](Tape& tape, std::span<const float> dy) {
        const auto x = a.value().data(), y = b.value().data();
        std::vector<double> da(x.size()), db(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          da[i] = 2.0 * dy[0] * (static_cast<double>(x[i]) - y[i]) / norm;
          db[i] = -da[i];
        }
        tape.accumulate(a, std::span<const double>(da));
        tape.accumulate(b, std::span<const double>(db));
      },
      op);
}
}  // namespace

Var mean_squared_error(Var a, Var b) { return squared_difference(a, b, true, "mean_squared_error"); }
Var squared_distance(Var a, Var b) { return squared_difference(a, b, false, "squared_distance"); }

Var pick(Var input, std::size_t flat_index) {
  const Tensor& x = input.value();
  if (flat_index >= x.numel())
    throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " + shape_str(x.shape()));
  return input.tape->record(
      scalar(x[flat_index]), {input},
      [input, flat_index](Tape& tape, std::span<const float> dy) {
        std::vector<float> dx(input.value().numel(), 0.0f);
        dx[flat_index] = dy[0];
        tape.accumulate(input, std::span<const float>(dx));
      },
      "pick");
}

Var channel_mean(Var input, std::size_t n, std::size_t channel) {
  const Tensor& x = input.value();
  if (x.rank() != 4) throw ShapeError("channel_mean: input must be NCHW, got " + shape_str(x.shape()));
  if (n >= x.dim(0) || channel >= x.dim(1))
    throw ShapeError("channel_mean: (" + std::to_string(n) + ", " + std::to_string(channel) + ") out of range for " +
                     shape_str(x.shape()));
  const std::size_t plane = x.dim(2) * x.dim(3);
  const std::size_t offset = (n * x.dim(1) + channel) * plane;
  double total = 0.0;
  for (std::size_t j = 0; j < plane; ++j) total += x[offset + j];
  return input.tape->record(
      scalar(total / static_cast<double>(plane)), {input},
      [input, offset, plane](Tape& tape, std::span<const float> dy) {
        std::vector<float> dx(input.value().numel(), 0.0f);
        const float g = static_cast<float>(dy[0] / static_cast<double>(plane));
        std::fill(dx.begin() + static_cast<std::ptrdiff_t>(offset),
                  dx.begin() + static_cast<std::ptrdiff_t>(offset + plane), g);
        tape.accumulate(input, std::span<const float>(dx));
      },
      "channel_mean");
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> coefficients) {
  if (terms.empty() || terms.size() != coefficients.size())
    throw ShapeError("weighted_sum: need one coefficient per term");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().numel() != 1) throw ShapeError("weighted_sum: terms must be scalar");
    total += coefficients[i] * terms[i].value()[0];
  }
  std::vector<Var> inputs(terms.begin(), terms.end());
  std::vector<double> coef(coefficients.begin(), coefficients.end());
  return terms[0].tape->record(
      scalar(total), inputs,
      [inputs, coef](Tape& tape, std::span<const float> dy) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          const double g = coef[i] * dy[0];
          tape.accumulate(inputs[i], std::span<const double>(&g, 1));
        }
      },
      "weighted_sum");
}

Var scale(Var input, double factor) {
  Tensor y = input.value();
  for (auto& v : y.data()) v = static_cast<float>(v * factor);
  return input.tape->record(
      std::move(y), {input},
      [input, factor](Tape& tape, std::span<const float> dy) {
        std::vector<double> dx(dy.begin(), dy.end());
        for (auto& v : dx) v *= factor;
        tape.accumulate(input, std::span<const double>(dx));
      },
      "scale");
}

Var straight_through(Var input, Tensor value) {
  if (value.shape() != input.shape())
    throw ShapeError("straight_through: " + shape_str(value.shape()) + " vs " + shape_str(input.shape()));
  value.check_finite("straight_through");
  return input.tape->record(
      std::move(value), {input},
      [input](Tape& tape, std::span<const float> dy) {
        const std::vector<double> dx(dy.begin(), dy.end());
        tape.accumulate(input, std::span<const double>(dx));
      },
      "straight_through");
}

Var gram(Var activation) {
  const Tensor& x = activation.value();
  std::size_t c = 0, plane = 0;
  if (x.rank() == 3) {
    c = x.dim(0);
    plane = x.dim(1) * x.dim(2);
  } else if (x.rank() == 4 && x.dim(0) == 1) {
    c = x.dim(1);
    plane = x.dim(2) * x.dim(3);
  } else {
    throw ShapeError("gram: activation must be C x H x W or 1 x C x H x W, got " + shape_str(x.shape()));
  }
  const double norm = static_cast<double>(c * plane);
  Tensor g({c, c});
  const float* data = x.data().data();
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = a; b < c; ++b) {
      const auto v = static_cast<float>(kernels::dot_f64(data + a * plane, data + b * plane, plane) / norm);
      g[a * c + b] = v;
      g[b * c + a] = v;
    }
  return activation.tape->record(
      std::move(g), {activation},
      [activation, c, plane, norm](Tape& tape, std::span<const float> dg) {
        const auto x = activation.value().data();
        std::vector<double> dx(c * plane, 0.0);
        for (std::size_t a = 0; a < c; ++a)
          for (std::size_t b = 0; b < c; ++b) {
            const double coef = (static_cast<double>(dg[a * c + b]) + dg[b * c + a]) / norm;
            if (coef == 0.0) continue;
            for (std::size_t j = 0; j < plane; ++j) dx[a * plane + j] += coef * x[b * plane + j];
          }
        tape.accumulate(activation, std::span<const double>(dx));
      },
      "gram");
}

Var total_variation(Var image) {
  const Tensor& x = image.value();
  if (x.rank() < 2) throw ShapeError("total_variation: need at least 2 axes, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.numel() / (h * w);
  if (h * w < 2) throw ShapeError("total_variation: image has no neighbouring pixels");
  const double nv = static_cast<double>(planes * (h - 1) * w);
  const double nh = static_cast<double>(planes * h * (w - 1));
  double sv = 0.0, sh = 0.0;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t at = (p * h + i) * w + j;
        if (i + 1 < h) sv += std::fabs(static_cast<double>(x[at + w]) - x[at]);
        if (j + 1 < w) sh += std::fabs(static_cast<double>(x[at + 1]) - x[at]);
      }
  const double value = (nv > 0 ? sv / nv : 0.0) + (nh > 0 ? sh / nh : 0.0);
  return image.tape->record(
      scalar(value), {image},
      [image, h, w, planes, nv, nh](Tape& tape, std::span<const float> dy) {
        const auto x = image.value().data();
        std::vector<double> dx(x.size(), 0.0);
        auto sign = [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); };
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              const std::size_t at = (p * h + i) * w + j;
              if (i + 1 < h) {
                const double s = dy[0] * sign(static_cast<double>(x[at + w]) - x[at]) / nv;
                dx[at + w] += s;
                dx[at] -= s;
              }
              if (j + 1 < w) {
                const double s = dy[0] * sign(static_cast<double>(x[at + 1]) - x[at]) / nh;
                dx[at + 1] += s;
                dx[at] -= s;
              }
            }
        tape.accumulate(image, std::span<const double>(dx));
      },
      "total_variation");
}

// ---------------------------------------------------------------------------
// Image-space helpers

Var sigmoid(Var input, double gain) {
  Tensor y = input.value();
  for (auto& v : y.data()) v = static_cast<float>(1.0 / (1.0 + std::exp(-gain * v)));
  return input.tape->record(
      std::move(y), {input},
      [input, gain](Tape& tape, std::span<const float> dy) {
        // s(1 - s) from the input in double; the stored float output loses
        // 1 - s to cancellation once s is close to 1.
        const auto x = input.value().data();
        std::vector<double> dx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double z = gain * x[i];
          const double s = 1.0 / (1.0 + std::exp(-z)), t = 1.0 / (1.0 + std::exp(z));
          dx[i] = dy[i] * gain * s * t;
        }
        tape.accumulate(input, std::span<const double>(dx));
      },
      "sigmoid");
}

namespace {
std::size_t wrap(std::ptrdiff_t v, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}
}  // namespace

Var roll(Var input, std::ptrdiff_t dy, std::ptrdiff_t dx) {
  const Tensor& x = input.value();
  if (x.rank() < 2) throw ShapeError("roll: need at least 2 axes");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1), planes = x.numel() / (h * w);
  // dst[i][j] = src[i - dy][j - dx]
  std::vector<std::size_t> src_of(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      src_of[i * w + j] = wrap(static_cast<std::ptrdiff_t>(i) - dy, h) * w + wrap(static_cast<std::ptrdiff_t>(j) - dx, w);
  Tensor y(x.shape());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t k = 0; k < h * w; ++k) y[p * h * w + k] = x[p * h * w + src_of[k]];
  return input.tape->record(
      std::move(y), {input},
      [input, src_of = std::move(src_of), planes, h, w](Tape& tape, std::span<const float> g) {
        std::vector<float> back(g.size());
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t k = 0; k < h * w; ++k) back[p * h * w + src_of[k]] = g[p * h * w + k];
        tape.accumulate(input, std::span<const float>(back));
      },
      "roll");
}

Var upsample_nearest(Var input, std::size_t factor) {
  const Tensor& x = input.value();
  if (x.rank() < 2) throw ShapeError("upsample_nearest: need at least 2 axes");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1), planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = h * factor;
  shape[shape.size() - 1] = w * factor;
  const std::size_t uh = h * factor, uw = w * factor;
  Tensor y(shape);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < uh; ++i)
      for (std::size_t j = 0; j < uw; ++j) y[(p * uh + i) * uw + j] = x[(p * h + i / factor) * w + j / factor];
  return input.tape->record(
      std::move(y), {input},
      [input, planes, h, w, factor](Tape& tape, std::span<const float> g) {
        const std::size_t uh = h * factor, uw = w * factor;
        std::vector<double> dx(planes * h * w, 0.0);
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t i = 0; i < uh; ++i)
            for (std::size_t j = 0; j < uw; ++j) dx[(p * h + i / factor) * w + j / factor] += g[(p * uh + i) * uw + j];
        tape.accumulate(input, std::span<const double>(dx));
      },
      "upsample_nearest");
}

Var repeat_channels(Var input, std::size_t channels) {
  const Tensor& x = input.value();
  if (x.rank() != 3 || x.dim(0) != 1)
    throw ShapeError("repeat_channels: input must be 1 x H x W, got " + shape_str(x.shape()));
  const std::size_t plane = x.numel();
  std::vector<float> data;
  data.reserve(plane * channels);
  for (std::size_t c = 0; c < channels; ++c) data.insert(data.end(), x.vec().begin(), x.vec().end());
  return input.tape->record(
      Tensor({channels, x.dim(1), x.dim(2)}, std::move(data)), {input},
      [input, channels, plane](Tape& tape, std::span<const float> g) {
        std::vector<double> dx(plane, 0.0);
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t j = 0; j < plane; ++j) dx[j] += g[c * plane + j];
        tape.accumulate(input, std::span<const double>(dx));
      },
      "repeat_channels");
}

}  // namespace sopt
