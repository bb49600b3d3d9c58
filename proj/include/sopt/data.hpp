#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sopt/net.hpp"
#include "sopt/tensor.hpp"

namespace sopt {

struct LabeledImage {
  Tensor image;  // C x H x W in [0, 1]
  std::size_t label = 0;
  std::string id;
};

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeKind { Circle, Square, Triangle, Cross, Ring, Stripes, Checker, Star };

const std::vector<std::string>& all_shape_names();
ShapeKind parse_shape_kind(const std::string& name);
std::string shape_kind_name(ShapeKind kind);

enum class ColorMode { Gray, Rgb };

struct ShapesSpec {
  std::vector<std::string> classes = all_shape_names();
  std::size_t size = 32;
  ColorMode color = ColorMode::Rgb;
  double position_jitter = 0.2;  // max centre offset, in half-canvas units
  double scale_min = 0.55;       // shape radius, in half-canvas units
  double scale_max = 0.9;
  double rotation_jitter = 3.14159265358979323846;  // radians, symmetric
  double noise_std = 0.04;

  std::size_t channels() const { return color == ColorMode::Gray ? 1 : 3; }
  void validate() const;
};

struct ShapePose {
  double cx = 0.0, cy = 0.0;
  double scale = 1.0;
  double rotation = 0.0;
};

// Point-membership test in the shape's unit frame (radius 1 at scale 1).
bool shape_contains(ShapeKind kind, double u, double v);

// Renders one shape with 4x4 supersampling; foreground/background are
// per-channel colours of length `channels`.
Tensor render_shape(ShapeKind kind, std::size_t size, const ShapePose& pose, const std::vector<float>& foreground,
                    const std::vector<float>& background);

// Exactly n_per_class images per class, class-major order. Each image uses
// its own stream seeded from (seed, image index), so the dataset is a pure
// function of its arguments.
std::vector<LabeledImage> generate_shapes(const ShapesSpec& spec, std::size_t n_per_class, std::uint64_t seed);

// Procedural "style source" textures that contain none of the shape classes.
enum class TextureKind { Waves, Blotches, Hatching, Dots };
const std::vector<std::string>& all_texture_names();
TextureKind parse_texture_kind(const std::string& name);
Tensor render_texture(TextureKind kind, std::size_t size, std::size_t channels, std::uint64_t seed);

// ---------------------------------------------------------------------------
// External corpora: manifest.csv ("filename,label") plus P5/P6 files.

enum class ManifestErrorCode { MissingManifest, MalformedHeader, MalformedRow, MissingFile, LabelMismatch, ImageMismatch };

class ManifestError : public Error {
 public:
  ManifestError(ManifestErrorCode code, const std::string& what) : Error(what), code_(code) {}
  ManifestErrorCode code() const { return code_; }

 private:
  ManifestErrorCode code_;
};

struct Manifest {
  std::vector<LabeledImage> images;
  std::vector<std::string> class_names;
};

// Labels map to indices of the sorted unique label names, or to positions
// in `expected_classes` when given (unknown labels are LabelMismatch).
Manifest load_manifest(const std::string& dir, const std::optional<std::vector<std::string>>& expected_classes = {});
void write_manifest(const std::string& dir, const std::vector<LabeledImage>& images,
                    const std::vector<std::string>& class_names);

// ---------------------------------------------------------------------------
// Training and evaluation

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> validation_accuracy;
};

struct TrainResult {
  RecognitionNet net;
  double initial_loss = 0.0;  // mean loss on the training split before any update
  std::vector<EpochMetrics> epochs;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t epoch, const std::string& what) : NumericError(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

// SGD with momentum on softmax cross-entropy. Bit-reproducible for fixed
// (net, data, cfg).
TrainResult train(RecognitionNet net, const std::vector<LabeledImage>& data, const TrainConfig& cfg);

// Stacks C x H x W images into N x C x H x W.
Tensor stack_images(const std::vector<const Tensor*>& images);

// Top-1 class per image (ties go to the lowest index).
std::vector<std::size_t> predict(const RecognitionNet& net, const std::vector<Tensor>& images);
std::size_t argmax_row(std::span<const float> row);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalResult evaluate_predictions(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels,
                                std::size_t classes);
EvalResult evaluate(const RecognitionNet& net, const std::vector<LabeledImage>& data);

struct Agreement {
  double rate = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> top1;  // (net A, net B) per image
};

Agreement cross_net_agreement(const RecognitionNet& a, const RecognitionNet& b, const std::vector<Tensor>& images);

}  // namespace sopt
