#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sopt/tensor.hpp"

namespace sopt {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the Tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Operations are appended in execution order, so inputs
// always precede the nodes that consume them. A tape belongs to one thread.
//
// backward() accumulates into leaf gradients: calling it twice without
// zero_grad() doubles them. Gradients of intermediate nodes are rebuilt on
// every call.
class Tape {
 public:
  // Receives the tape and the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Tape&, std::span<const float>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  // Gradient of a node after backward(); zeros if nothing reached it.
  Tensor grad(Var v) const;

  // Adds delta into v's gradient. Ignored for nodes that need no gradient.
  void accumulate(Var v, std::span<const float> delta);
  void accumulate(Var v, std::span<const double> delta);

  void backward(Var output);
  void zero_grad();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<float> grad;
  };

  Var push(Node node);
  std::vector<float>& grad_storage(std::size_t id);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

inline void backward(Var output) { output.tape->backward(output); }

// --- network ops (NCHW) ---

Var conv2d(Var input, Var weights, Var bias, std::size_t stride, std::size_t pad);
Var max_pool2(Var input);
Var relu(Var input);
// input: N x D, weights: D x M, bias: M
Var affine(Var input, Var weights, Var bias);
// N x (rest)
Var flatten(Var input);
Var reshape(Var input, Shape shape);
// Contiguous run of `shape` elements starting at a flat offset.
Var slice(Var input, std::size_t offset, Shape shape);

struct SoftmaxCrossEntropy {
  Var loss;
  Tensor probs;
};
SoftmaxCrossEntropy softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
// Row-wise softmax of an N x K tensor.
Var softmax(Var logits);

// --- scalar reductions and elementwise helpers ---

Var sum(Var input);
Var mean_square(Var input);
// Mean of (a - b)^2; shapes must match.
Var mean_squared_error(Var a, Var b);
// Sum of (a - b)^2.
Var squared_distance(Var a, Var b);
// Element at a flat index, as a 1-element tensor.
Var pick(Var input, std::size_t flat_index);
// Spatial mean of channel c of image n in an NCHW tensor.
Var channel_mean(Var input, std::size_t n, std::size_t channel);
// Sum of coefficient * term over 1-element tensors.
Var weighted_sum(std::span<const Var> terms, std::span<const double> coefficients);
Var scale(Var input, double factor);

// Channel Gram matrix normalized by C*H*W. Accepts C x H x W or 1 x C x H x W.
Var gram(Var activation);
// Anisotropic total variation: mean vertical |diff| plus mean horizontal
// |diff| over the last two axes. A direction with no pairs contributes 0.
Var total_variation(Var image);

// --- image-space helpers used by parameterizations and the optimizer ---

// logistic(input * gain)
Var sigmoid(Var input, double gain = 1.0);
// Forward value `value`, gradient passed to `input` unchanged (straight-through).
Var straight_through(Var input, Tensor value);
// Circular shift of the last two axes by (dy, dx).
Var roll(Var input, std::ptrdiff_t dy, std::ptrdiff_t dx);
// Nearest-neighbour upsampling of the last two axes by an integer factor.
Var upsample_nearest(Var input, std::size_t factor);
// Repeats a 1 x H x W tensor to C x H x W.
Var repeat_channels(Var input, std::size_t channels);

}  // namespace sopt
