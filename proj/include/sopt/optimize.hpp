#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sopt/net.hpp"
#include "sopt/objectives.hpp"
#include "sopt/paramspace.hpp"

namespace sopt {

enum class ProjectionMode { None, L2, Linf };

struct Projection {
  ProjectionMode mode = ProjectionMode::None;
  double epsilon = 0.0;
};

// Temperature multiplier for relaxed media: start * factor^(step / every),
// never below floor.
struct AnnealSchedule {
  double start = 1.0;
  double factor = 0.85;
  std::size_t every = 50;
  double floor = 0.05;

  double at(std::size_t step) const;
  // First step at which the floor is reached.
  std::size_t steps_to_floor() const;
};

struct AscentConfig {
  std::size_t steps = 256;
  double step_size = 0.05;
  bool normalize_gradient = true;
  std::size_t jitter = 2;  // pixels
  Projection projection;
  AnnealSchedule anneal;
  std::uint64_t seed = 1;
  std::size_t snapshot_interval = 0;  // 0: initial and final only
  // Relaxed media (Halftone, Palette): once the anneal reaches its floor the
  // objective sees the finalized image while gradients follow the relaxation.
  bool straight_through = true;
};

void validate_ascent(const AscentConfig& cfg);

struct Snapshot {
  std::size_t step = 0;
  double value = 0.0;
  std::vector<double> term_values;
  Tensor image;
};

// One step of the blackbox painter.
struct PaintStep {
  std::size_t step = 0;
  bool accepted = false;
  double best_proposal = 0.0;
  double value = 0.0;  // objective after the step
};

struct Trajectory {
  std::vector<Snapshot> snapshots;  // ordered by step; snapshot 0 is the start
  Parameterization final_param;
  Artifact artifact;
  std::vector<PaintStep> paint_log;  // blackbox only
};

// Deviation of `image` from `init` limited to the epsilon ball, then [0,1].
Tensor project(const Tensor& image, const Tensor& init, const Projection& projection);

// Gradient ascent on the parameters. With a projection the iterate is the
// projected image, mapped back to parameters through the exact inverse
// (Pixel and Frequency only); snapshots and the artifact hold that image.
Trajectory ascend(const CompositeObjective& obj, const Parameterization& init, const RecognitionNet& net,
                  const AscentConfig& cfg);

struct PaintConfig {
  std::size_t budget = 100;
  std::size_t proposals = 32;
  std::uint64_t seed = 1;
};

// Random stroke in a width x height canvas, reproducible from `seed`.
Stroke sample_stroke(std::uint64_t seed, std::size_t width, std::size_t height);
// Canvas of n sampled strokes appended to `canvas`.
Parameterization random_canvas(const Parameterization& canvas, std::size_t n, std::uint64_t seed);

// Greedy serial stroke search using forward passes only. Snapshots are taken
// at the start and after every accepted stroke.
Trajectory blackbox_paint(const CompositeObjective& obj, const Parameterization& canvas, const RecognitionNet& net,
                          const PaintConfig& cfg);

struct SuperstimulusResult {
  std::optional<double> ratio;  // empty when the dataset maximum is <= 0
  double image_value = 0.0;
  double dataset_max = 0.0;
};

SuperstimulusResult superstimulus_ratio(const RecognitionNet& net, const ObjectiveTerm& term,
                                        const std::vector<Tensor>& dataset, const Tensor& image);

}  // namespace sopt
