#include "sopt/net.hpp"

#include <cmath>
#include <random>

namespace sopt {

std::string layer_name(const LayerSpec& spec) {
  struct Visitor {
    std::string operator()(const layer::Conv& c) const {
      return "Conv(" + std::to_string(c.out_channels) + "," + std::to_string(c.kernel) + "," +
             std::to_string(c.stride) + "," + std::to_string(c.pad) + ")";
    }
    std::string operator()(const layer::ReLU&) const { return "ReLU"; }
    std::string operator()(const layer::MaxPool2&) const { return "MaxPool2"; }
    std::string operator()(const layer::Flatten&) const { return "Flatten"; }
    std::string operator()(const layer::Dense& d) const { return "Dense(" + std::to_string(d.out_features) + ")"; }
  };
  return std::visit(Visitor{}, spec);
}

std::vector<LayerSpec> small_net_8(std::size_t classes) {
  return {layer::Conv{16, 3, 1, 1}, layer::ReLU{}, layer::MaxPool2{}, layer::Conv{32, 3, 1, 1}, layer::ReLU{},
          layer::MaxPool2{},        layer::Conv{64, 3, 1, 1}, layer::ReLU{}, layer::MaxPool2{}, layer::Flatten{},
          layer::Dense{classes}};
}

std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& layers, const ImageShape& input, std::size_t classes) {
  if (input.channels == 0 || input.height == 0 || input.width == 0) throw ShapeError("input shape has a zero dimension");
  if (layers.empty()) throw ShapeError("net has no layers");
  std::vector<Shape> shapes;
  Shape cur{input.channels, input.height, input.width};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto bad = [&](const std::string& why) {
      return ShapeError("layer " + std::to_string(i) + " " + layer_name(layers[i]) + ": " + why + " (input " +
                        shape_str(cur) + ")");
    };
    if (const auto* c = std::get_if<layer::Conv>(&layers[i])) {
      if (cur.size() != 3) throw bad("needs a C x H x W input");
      if (c->out_channels == 0 || c->kernel == 0 || c->stride == 0) throw bad("zero-sized parameter");
      if (c->kernel > cur[1] + 2 * c->pad || c->kernel > cur[2] + 2 * c->pad) throw bad("kernel exceeds padded input");
      cur = {c->out_channels, (cur[1] + 2 * c->pad - c->kernel) / c->stride + 1,
             (cur[2] + 2 * c->pad - c->kernel) / c->stride + 1};
    } else if (std::holds_alternative<layer::MaxPool2>(layers[i])) {
      if (cur.size() != 3) throw bad("needs a C x H x W input");
      if (cur[1] % 2 || cur[2] % 2) throw bad("spatial dims must be even");
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
    } else if (std::holds_alternative<layer::Flatten>(layers[i])) {
      cur = {shape_numel(cur)};
    } else if (const auto* d = std::get_if<layer::Dense>(&layers[i])) {
      if (cur.size() != 1) throw bad("needs a flattened input");
      if (d->out_features == 0) throw bad("zero output features");
      cur = {d->out_features};
    }
    shapes.push_back(cur);
  }
  const auto* last = std::get_if<layer::Dense>(&layers.back());
  if (!last || last->out_features != classes)
    throw ShapeError("layer " + std::to_string(layers.size() - 1) + " " + layer_name(layers.back()) +
                     ": net must end in Dense(" + std::to_string(classes) + ")");
  return shapes;
}

std::vector<Shape> RecognitionNet::layer_shapes() const { return infer_shapes(layers, input, classes); }

std::size_t RecognitionNet::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return i;
  throw ConfigError("unknown class name '" + name + "'");
}

std::vector<std::size_t> RecognitionNet::conv_activation_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!std::holds_alternative<layer::Conv>(layers[i])) continue;
    if (i + 1 < layers.size() && std::holds_alternative<layer::ReLU>(layers[i + 1]))
      out.push_back(i + 1);
    else
      out.push_back(i);
  }
  return out;
}

RecognitionNet build_net(std::vector<LayerSpec> layers, const ImageShape& input, std::size_t classes,
                         std::uint64_t seed, std::vector<std::string> class_names) {
  const auto shapes = infer_shapes(layers, input, classes);
  if (class_names.empty())
    for (std::size_t k = 0; k < classes; ++k) class_names.push_back("class" + std::to_string(k));
  if (class_names.size() != classes)
    throw ShapeError(std::to_string(class_names.size()) + " class names for " + std::to_string(classes) + " classes");

  RecognitionNet net;
  net.input = input;
  net.classes = classes;
  net.class_names = std::move(class_names);
  std::mt19937_64 rng(seed);
  Shape prev{input.channels, input.height, input.width};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::vector<Tensor> p;
    auto gaussian = [&](Shape shape, std::size_t fan_in) {
      std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / static_cast<double>(fan_in))));
      Tensor t(std::move(shape));
      for (auto& v : t.data()) v = dist(rng);
      return t;
    };
    if (const auto* c = std::get_if<layer::Conv>(&layers[i])) {
      p.push_back(gaussian({c->out_channels, prev[0], c->kernel, c->kernel}, prev[0] * c->kernel * c->kernel));
      p.emplace_back(Shape{c->out_channels}, 0.0f);
    } else if (const auto* d = std::get_if<layer::Dense>(&layers[i])) {
      p.push_back(gaussian({prev[0], d->out_features}, prev[0]));
      p.emplace_back(Shape{d->out_features}, 0.0f);
    }
    net.params.push_back(std::move(p));
    prev = shapes[i];
  }
  net.layers = std::move(layers);
  return net;
}

TapedForward forward_on_tape(const RecognitionNet& net, Var input, bool trainable, std::optional<std::size_t> depth) {
  const std::size_t n_layers = std::min(depth.value_or(net.layers.size()), net.layers.size());
  Tape& tape = *input.tape;
  TapedForward out;
  out.params.resize(net.layers.size());
  Var cur = input;
  for (std::size_t i = 0; i < n_layers; ++i) {
    for (const Tensor& p : net.params[i]) out.params[i].push_back(trainable ? tape.leaf(p) : tape.constant(p));
    const auto& spec = net.layers[i];
    if (const auto* c = std::get_if<layer::Conv>(&spec)) {
      cur = conv2d(cur, out.params[i][0], out.params[i][1], c->stride, c->pad);
    } else if (std::holds_alternative<layer::ReLU>(spec)) {
      cur = relu(cur);
    } else if (std::holds_alternative<layer::MaxPool2>(spec)) {
      cur = max_pool2(cur);
    } else if (std::holds_alternative<layer::Flatten>(spec)) {
      cur = flatten(cur);
    } else {
      cur = affine(cur, out.params[i][0], out.params[i][1]);
    }
    out.layers.push_back(cur);
  }
  return out;
}

void validate_images(const RecognitionNet& net, const Tensor& images) {
  const Shape expected{net.input.channels, net.input.height, net.input.width};
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != expected)
    throw ShapeError("images must be N x " + std::to_string(expected[0]) + " x " + std::to_string(expected[1]) +
                     " x " + std::to_string(expected[2]) + ", got " + shape_str(images.shape()));
  for (float v : images.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw ShapeError("pixel value " + std::to_string(v) + " outside [0, 1]");
}

ActivationRecord forward(const RecognitionNet& net, const Tensor& images) {
  validate_images(net, images);
  Tape tape;
  const auto taped = forward_on_tape(net, tape.constant(images));
  ActivationRecord rec;
  for (const Var& v : taped.layers) rec.layers.push_back(v.value());
  rec.logits = rec.layers.back();
  rec.probs = softmax(taped.logits()).value();
  return rec;
}

}  // namespace sopt
