#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sopt/autodiff.hpp"
#include "sopt/tensor.hpp"

namespace sopt {

namespace layer {
struct Conv {
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  friend bool operator==(const Conv&, const Conv&) = default;
};
struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct MaxPool2 {
  friend bool operator==(const MaxPool2&, const MaxPool2&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct Dense {
  std::size_t out_features = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};
}  // namespace layer

using LayerSpec = std::variant<layer::Conv, layer::ReLU, layer::MaxPool2, layer::Flatten, layer::Dense>;

std::string layer_name(const LayerSpec& spec);

struct ImageShape {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Conv(16)-ReLU-Pool-Conv(32)-ReLU-Pool-Conv(64)-ReLU-Pool-Flatten-Dense(K)
std::vector<LayerSpec> small_net_8(std::size_t classes);

struct RecognitionNet {
  std::vector<LayerSpec> layers;
  // Weight and bias for Conv/Dense layers, empty for the rest.
  std::vector<std::vector<Tensor>> params;
  ImageShape input;
  std::size_t classes = 0;
  std::vector<std::string> class_names;

  // Per-image output shape of every layer (without the batch axis).
  std::vector<Shape> layer_shapes() const;
  std::size_t class_index(const std::string& name) const;
  // Indices of the ReLU following each Conv; these are the "conv layer"
  // activations that style and content terms read by default.
  std::vector<std::size_t> conv_activation_layers() const;
};

// Validates that `layers` compose on `input` and end in Dense{classes};
// throws ShapeError naming the first bad layer.
std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& layers, const ImageShape& input, std::size_t classes);

// Weights ~ N(0, sqrt(2 / fan_in)), biases zero; deterministic for a seed.
RecognitionNet build_net(std::vector<LayerSpec> layers, const ImageShape& input, std::size_t classes,
                         std::uint64_t seed, std::vector<std::string> class_names = {});

struct ActivationRecord {
  // Output of each layer, batch axis included. Last entry holds the logits.
  std::vector<Tensor> layers;
  Tensor logits;
  Tensor probs;
};

// Net recorded on a tape. `layers` holds one Var per layer; parameter Vars
// are leaves when recorded with trainable = true.
struct TapedForward {
  std::vector<Var> layers;
  std::vector<std::vector<Var>> params;
  Var logits() const { return layers.back(); }
};

// Records the net on `input` (N x C x H x W). `depth` limits evaluation to
// the first `depth` layers.
TapedForward forward_on_tape(const RecognitionNet& net, Var input, bool trainable = false,
                             std::optional<std::size_t> depth = std::nullopt);

// Checks shape against the net and pixel range [0, 1].
void validate_images(const RecognitionNet& net, const Tensor& images);

ActivationRecord forward(const RecognitionNet& net, const Tensor& images);

enum class CheckpointErrorCode { BadMagic, VersionMismatch, Truncation, Malformed, Io };

class CheckpointError : public FormatError {
 public:
  CheckpointError(CheckpointErrorCode code, const std::string& what) : FormatError(what), code_(code) {}
  CheckpointErrorCode code() const { return code_; }

 private:
  CheckpointErrorCode code_;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const RecognitionNet& net, const std::string& path);
RecognitionNet load_checkpoint(const std::string& path);
std::string checkpoint_bytes(const RecognitionNet& net);
RecognitionNet checkpoint_from_bytes(const std::string& bytes);

}  // namespace sopt
