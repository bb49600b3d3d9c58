#include "sopt/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace sopt {

namespace {

Tensor as_batch(const Tensor& image) {
  if (image.rank() == 4) return image;
  if (image.rank() != 3) throw ShapeError("image must be C x H x W, got " + shape_str(image.shape()));
  return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
}

Shape batched(const Shape& s) {
  Shape out{1};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

void check_layer(std::size_t layer, const RecognitionNet& net, const char* what) {
  if (layer >= net.layers.size())
    throw ConfigError(std::string(what) + ": layer " + std::to_string(layer) + " out of range (net has " +
                      std::to_string(net.layers.size()) + " layers)");
}

}  // namespace

Representation representation(const RecognitionNet& net, const Tensor& image, const std::vector<std::size_t>& layers) {
  const Tensor batch = as_batch(image);
  validate_images(net, batch);
  std::size_t depth = 0;
  for (auto l : layers) {
    check_layer(l, net, "representation");
    depth = std::max(depth, l + 1);
  }
  Tape tape;
  const auto taped = forward_on_tape(net, tape.constant(batch), false, depth);
  Representation rep;
  for (auto l : layers) rep[l] = taped.layers[l].value();
  return rep;
}

GramMatrix gram(const Tensor& activation) {
  Tape tape;
  const Var g = sopt::gram(tape.constant(activation));
  const Shape& s = activation.shape();
  return GramMatrix{g.value(), static_cast<double>(shape_numel(s) / (s.size() == 4 ? s[0] : 1))};
}

StyleSignature style_signature(const RecognitionNet& net, const Tensor& image, std::vector<std::size_t> layers,
                               std::vector<double> weights) {
  if (layers.empty()) layers = net.conv_activation_layers();
  if (weights.empty()) weights.assign(layers.size(), 1.0);
  if (weights.size() != layers.size()) throw ConfigError("style_signature: one weight per layer required");
  const auto rep = representation(net, image, layers);
  StyleSignature sig;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (weights[i] < 0 || !std::isfinite(weights[i])) throw ConfigError("style_signature: weights must be >= 0");
    if (rep.at(layers[i]).rank() != 4) throw ConfigError("style_signature: layer " + std::to_string(layers[i]) + " is not spatial");
    sig.layers.push_back(StyleLayer{layers[i], gram(rep.at(layers[i])), weights[i]});
  }
  return sig;
}

std::string term_name(const ObjectiveTerm& t) {
  static const char* names[] = {"class_probability", "class_logit",  "neuron",          "channel_mean", "layer_l2",
                                "content_loss",      "style_loss",   "total_variation", "l2_distance"};
  return names[t.index()];
}

bool is_activation_term(const ObjectiveTerm& t) {
  return std::holds_alternative<term::Neuron>(t) || std::holds_alternative<term::ChannelMean>(t) ||
         std::holds_alternative<term::LayerL2>(t) || std::holds_alternative<term::ClassLogit>(t);
}

void validate_term(const ObjectiveTerm& t, const RecognitionNet& net) {
  const auto shapes = net.layer_shapes();
  if (const auto* c = std::get_if<term::ClassProbability>(&t)) {
    if (c->cls >= net.classes) throw ConfigError("class_probability: class index out of range");
  } else if (const auto* c = std::get_if<term::ClassLogit>(&t)) {
    if (c->cls >= net.classes) throw ConfigError("class_logit: class index out of range");
  } else if (const auto* n = std::get_if<term::Neuron>(&t)) {
    check_layer(n->layer, net, "neuron");
    const Shape& s = shapes[n->layer];
    const bool ok = s.size() == 3 ? (n->channel < s[0] && n->y < s[1] && n->x < s[2])
                                  : (n->channel < s[0] && n->y == 0 && n->x == 0);
    if (!ok) throw ConfigError("neuron: position out of range for layer shape " + shape_str(s));
  } else if (const auto* m = std::get_if<term::ChannelMean>(&t)) {
    check_layer(m->layer, net, "channel_mean");
    const Shape& s = shapes[m->layer];
    if (s.size() != 3 || m->channel >= s[0]) throw ConfigError("channel_mean: channel out of range for " + shape_str(s));
  } else if (const auto* l = std::get_if<term::LayerL2>(&t)) {
    check_layer(l->layer, net, "layer_l2");
  } else if (const auto* c = std::get_if<term::ContentLoss>(&t)) {
    check_layer(c->layer, net, "content_loss");
    if (c->target.shape() != batched(shapes[c->layer]))
      throw ConfigError("content_loss: target shape " + shape_str(c->target.shape()) + " does not match layer " +
                        std::to_string(c->layer));
  } else if (const auto* s = std::get_if<term::StyleLoss>(&t)) {
    if (s->signature.layers.empty()) throw ConfigError("style_loss: empty signature");
    for (const auto& sl : s->signature.layers) {
      check_layer(sl.layer, net, "style_loss");
      const Shape& ls = shapes[sl.layer];
      if (ls.size() != 3 || sl.target.matrix.shape() != Shape{ls[0], ls[0]})
        throw ConfigError("style_loss: Gram target does not match layer " + std::to_string(sl.layer));
      if (!(sl.weight >= 0) || !std::isfinite(sl.weight)) throw ConfigError("style_loss: weights must be >= 0");
    }
  } else if (const auto* d = std::get_if<term::L2Distance>(&t)) {
    if (d->reference.shape() != Shape{net.input.channels, net.input.height, net.input.width})
      throw ConfigError("l2_distance: reference shape " + shape_str(d->reference.shape()) + " does not match net input");
  }
}

void validate_objective(const CompositeObjective& obj, const RecognitionNet& net) {
  if (obj.terms.empty()) throw ConfigError("objective has no terms");
  for (const auto& wt : obj.terms) {
    if (!std::isfinite(wt.weight)) throw ConfigError("objective weight must be finite");
    validate_term(wt.term, net);
  }
}

std::size_t required_depth(const ObjectiveTerm& t, const RecognitionNet& net) {
  if (std::holds_alternative<term::ClassProbability>(t) || std::holds_alternative<term::ClassLogit>(t))
    return net.layers.size();
  if (const auto* n = std::get_if<term::Neuron>(&t)) return n->layer + 1;
  if (const auto* m = std::get_if<term::ChannelMean>(&t)) return m->layer + 1;
  if (const auto* l = std::get_if<term::LayerL2>(&t)) return l->layer + 1;
  if (const auto* c = std::get_if<term::ContentLoss>(&t)) return c->layer + 1;
  if (const auto* s = std::get_if<term::StyleLoss>(&t)) {
    std::size_t d = 0;
    for (const auto& sl : s->signature.layers) d = std::max(d, sl.layer + 1);
    return d;
  }
  return 0;
}

namespace {

Var record_term(const ObjectiveTerm& t, Var image, const TapedForward& fwd, const RecognitionNet& net) {
  Tape& tape = *image.tape;
  struct Visitor {
    Tape& tape;
    Var image;
    const TapedForward& fwd;
    const RecognitionNet& net;

    Var operator()(const term::ClassProbability& c) const { return pick(softmax(fwd.logits()), c.cls); }
    Var operator()(const term::ClassLogit& c) const { return pick(fwd.logits(), c.cls); }
    Var operator()(const term::Neuron& n) const {
      const Var act = fwd.layers[n.layer];
      const Shape& s = act.shape();
      const std::size_t idx = s.size() == 4 ? (n.channel * s[2] + n.y) * s[3] + n.x : n.channel;
      return pick(act, idx);
    }
    Var operator()(const term::ChannelMean& m) const { return channel_mean(fwd.layers[m.layer], 0, m.channel); }
    Var operator()(const term::LayerL2& l) const { return mean_square(fwd.layers[l.layer]); }
    Var operator()(const term::ContentLoss& c) const {
      return mean_squared_error(fwd.layers[c.layer], tape.constant(c.target));
    }
    Var operator()(const term::StyleLoss& s) const {
      std::vector<Var> parts;
      std::vector<double> weights;
      for (const auto& sl : s.signature.layers) {
        parts.push_back(mean_squared_error(sopt::gram(fwd.layers[sl.layer]), tape.constant(sl.target.matrix)));
        weights.push_back(sl.weight);
      }
      return weighted_sum(parts, weights);
    }
    Var operator()(const term::TotalVariation&) const { return sopt::total_variation(image); }
    Var operator()(const term::L2Distance& d) const { return squared_distance(image, tape.constant(d.reference)); }
  };
  return std::visit(Visitor{tape, image, fwd, net}, t);
}

}  // namespace

TapedObjective objective_on_tape(const CompositeObjective& obj, Var image, const RecognitionNet& net) {
  validate_objective(obj, net);
  const Tensor& img = image.value();
  if (img.shape() != Shape{net.input.channels, net.input.height, net.input.width})
    throw ShapeError("objective: image shape " + shape_str(img.shape()) + " does not match net input");
  std::size_t depth = 0;
  for (const auto& wt : obj.terms) depth = std::max(depth, required_depth(wt.term, net));
  TapedForward fwd;
  if (depth > 0) fwd = forward_on_tape(net, reshape(image, {1, img.dim(0), img.dim(1), img.dim(2)}), false, depth);

  TapedObjective out;
  std::vector<Var> parts;
  std::vector<double> coef;
  for (const auto& wt : obj.terms) {
    const Var v = record_term(wt.term, image, fwd, net);
    out.term_values.push_back(v.value()[0]);
    parts.push_back(v);
    coef.push_back(wt.direction == Direction::Maximize ? wt.weight : -wt.weight);
  }
  out.total = weighted_sum(parts, coef);
  return out;
}

ObjectiveValue evaluate_objective(const CompositeObjective& obj, const Tensor& image, const RecognitionNet& net) {
  validate_images(net, as_batch(image));
  Tape tape;
  const Var x = tape.leaf(image.rank() == 4 ? image.reshaped({image.dim(1), image.dim(2), image.dim(3)}) : image);
  const auto taped = objective_on_tape(obj, x, net);
  tape.backward(taped.total);
  return ObjectiveValue{taped.total.value()[0], tape.grad(x), taped.term_values};
}

ObjectiveValue objective_value(const CompositeObjective& obj, const Tensor& image, const RecognitionNet& net) {
  validate_images(net, as_batch(image));
  Tape tape;
  const Var x = tape.constant(image.rank() == 4 ? image.reshaped({image.dim(1), image.dim(2), image.dim(3)}) : image);
  const auto taped = objective_on_tape(obj, x, net);
  return ObjectiveValue{taped.total.value()[0], Tensor(), taped.term_values};
}

double term_value(const ObjectiveTerm& t, const Tensor& image, const RecognitionNet& net) {
  CompositeObjective obj{{WeightedTerm{t, 1.0, Direction::Maximize}}};
  return objective_value(obj, image, net).term_values[0];
}

double content_loss(const Tensor& x_repr, const Tensor& target_repr) {
  Tape tape;
  return mean_squared_error(tape.constant(x_repr), tape.constant(target_repr)).value()[0];
}

double style_loss(const Tensor& image, const StyleSignature& signature, const RecognitionNet& net) {
  return term_value(term::StyleLoss{signature}, image, net);
}

double total_variation(const Tensor& image) {
  Tape tape;
  return sopt::total_variation(tape.constant(image)).value()[0];
}

}  // namespace sopt
