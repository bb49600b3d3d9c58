#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "sopt/autodiff.hpp"
#include "sopt/net.hpp"

namespace sopt {

// Layer index -> activation (batch axis of 1 kept), from one forward pass.
using Representation = std::map<std::size_t, Tensor>;

Representation representation(const RecognitionNet& net, const Tensor& image, const std::vector<std::size_t>& layers);

// Channel correlations of one layer: G[a,b] = sum_hw act[a,hw] act[b,hw] / (C*H*W).
struct GramMatrix {
  Tensor matrix;  // C x C
  double normalization = 1.0;
};

GramMatrix gram(const Tensor& activation);

struct StyleLayer {
  std::size_t layer = 0;
  GramMatrix target;
  double weight = 1.0;
};

struct StyleSignature {
  std::vector<StyleLayer> layers;
};

// Defaults to every conv activation layer with weight 1.
StyleSignature style_signature(const RecognitionNet& net, const Tensor& image, std::vector<std::size_t> layers = {},
                               std::vector<double> weights = {});

namespace term {
struct ClassProbability {
  std::size_t cls = 0;
};
struct ClassLogit {
  std::size_t cls = 0;
};
// Activation at (channel, y, x); for flat layers `channel` is the feature index.
struct Neuron {
  std::size_t layer = 0, channel = 0, y = 0, x = 0;
};
struct ChannelMean {
  std::size_t layer = 0, channel = 0;
};
// Mean squared activation over the whole layer.
struct LayerL2 {
  std::size_t layer = 0;
};
// Mean squared difference to a target activation.
struct ContentLoss {
  std::size_t layer = 0;
  Tensor target;
};
// Sum over layers of weight * mean squared Gram difference.
struct StyleLoss {
  StyleSignature signature;
};
struct TotalVariation {};
// Squared Euclidean distance to a reference image.
struct L2Distance {
  Tensor reference;
};
}  // namespace term

using ObjectiveTerm = std::variant<term::ClassProbability, term::ClassLogit, term::Neuron, term::ChannelMean,
                                   term::LayerL2, term::ContentLoss, term::StyleLoss, term::TotalVariation,
                                   term::L2Distance>;

std::string term_name(const ObjectiveTerm& t);
// True for the activation-type terms a superstimulus ratio is defined on.
bool is_activation_term(const ObjectiveTerm& t);

enum class Direction { Maximize, Minimize };

struct WeightedTerm {
  ObjectiveTerm term;
  double weight = 1.0;
  Direction direction = Direction::Maximize;
};

// The optimizer always ascends sum(sign * weight * term), sign = -1 for
// minimized terms.
struct CompositeObjective {
  std::vector<WeightedTerm> terms;
};

void validate_term(const ObjectiveTerm& t, const RecognitionNet& net);
void validate_objective(const CompositeObjective& obj, const RecognitionNet& net);

// Number of leading net layers a term needs evaluated (0 for image-only terms).
std::size_t required_depth(const ObjectiveTerm& t, const RecognitionNet& net);

struct TapedObjective {
  Var total;
  std::vector<double> term_values;  // unsigned, unweighted
};

// Records the objective for a C x H x W image Var.
TapedObjective objective_on_tape(const CompositeObjective& obj, Var image, const RecognitionNet& net);

struct ObjectiveValue {
  double value = 0.0;
  Tensor grad;  // same shape as the image
  std::vector<double> term_values;
};

ObjectiveValue evaluate_objective(const CompositeObjective& obj, const Tensor& image, const RecognitionNet& net);
// Forward only; no gradient.
ObjectiveValue objective_value(const CompositeObjective& obj, const Tensor& image, const RecognitionNet& net);
double term_value(const ObjectiveTerm& t, const Tensor& image, const RecognitionNet& net);

// Plain-value helpers matching the corresponding terms.
double content_loss(const Tensor& x_repr, const Tensor& target_repr);
double style_loss(const Tensor& image, const StyleSignature& signature, const RecognitionNet& net);
double total_variation(const Tensor& image);

}  // namespace sopt
