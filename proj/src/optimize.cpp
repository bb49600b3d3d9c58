#include "sopt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sopt/rng.hpp"

namespace sopt {

namespace {

constexpr double kLogitClamp = 1e-6;

// Parameters whose decode is `image`, for the exactly invertible variants.
Tensor invert_image(const ParamSpec& spec, const Tensor& image) {
  Tensor logits = image;
  for (auto& v : logits.data()) {
    const double p = std::clamp(static_cast<double>(v), kLogitClamp, 1.0 - kLogitClamp);
    v = static_cast<float>(std::log(p / (1.0 - p)));
  }
  if (std::holds_alternative<param::Pixel>(spec.kind)) return logits.reshaped({logits.numel()});
  const auto& f = std::get<param::Frequency>(spec.kind);
  Tensor spectrum = rfft2_ortho(logits);
  const std::size_t wh = f.width / 2 + 1;
  for (std::size_t i = 0; i < spectrum.numel(); ++i) {
    const std::size_t bin = (i / 2) % (f.height * wh);
    spectrum[i] = static_cast<float>(spectrum[i] / frequency_scale(bin / wh, bin % wh, f.height, f.width));
  }
  return spectrum.reshaped({spectrum.numel()});
}

Snapshot take_snapshot(std::size_t step, const CompositeObjective& obj, const Tensor& image, const RecognitionNet& net) {
  ObjectiveValue v = objective_value(obj, image, net);
  return Snapshot{step, v.value, std::move(v.term_values), image};
}

double logit(double p) {
  p = std::clamp(p, 1e-4, 1.0 - 1e-4);
  return std::log(p / (1.0 - p));
}

}  // namespace

double AnnealSchedule::at(std::size_t step) const {
  const double t = start * std::pow(factor, static_cast<double>(step / std::max<std::size_t>(every, 1)));
  return std::max(t, floor);
}

std::size_t AnnealSchedule::steps_to_floor() const {
  std::size_t step = 0;
  while (at(step) > floor && step < 1000000) step += std::max<std::size_t>(every, 1);
  return step;
}

void validate_ascent(const AscentConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("ascent: steps must be >= 1");
  if (!(cfg.step_size > 0) || !std::isfinite(cfg.step_size)) throw ConfigError("ascent: step_size must be positive");
  if (cfg.projection.mode != ProjectionMode::None && !(cfg.projection.epsilon > 0))
    throw ConfigError("ascent: projection epsilon must be > 0");
  const auto& a = cfg.anneal;
  if (!(a.start > 0) || !(a.factor > 0 && a.factor <= 1) || !(a.floor > 0) || a.every < 1)
    throw ConfigError("ascent: invalid anneal schedule");
}

Tensor project(const Tensor& image, const Tensor& init, const Projection& projection) {
  if (image.shape() != init.shape())
    throw ShapeError("project: " + shape_str(image.shape()) + " vs " + shape_str(init.shape()));
  Tensor out = image;
  const std::size_t n = image.numel();
  if (projection.mode == ProjectionMode::L2) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(image[i]) - init[i];
      norm2 += d * d;
    }
    const double norm = std::sqrt(norm2);
    if (norm > projection.epsilon) {
      const double s = projection.epsilon / norm;
      for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<float>(init[i] + (static_cast<double>(image[i]) - init[i]) * s);
    }
  } else if (projection.mode == ProjectionMode::Linf) {
    const double eps = projection.epsilon;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::clamp(static_cast<double>(image[i]) - init[i], -eps, eps);
      float v = static_cast<float>(init[i] + d);
      // Rounding to float may overshoot the ball by an ulp.
      while (std::abs(static_cast<double>(v) - init[i]) > eps) v = std::nextafter(v, init[i]);
      out[i] = v;
    }
  }
  for (auto& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Trajectory ascend(const CompositeObjective& obj, const Parameterization& init, const RecognitionNet& net,
                  const AscentConfig& cfg) {
  validate_ascent(cfg);
  validate_spec(init.spec);
  validate_objective(obj, net);
  if (init.params.numel() != param_count(init.spec)) throw ShapeError("ascend: parameter count mismatch");
  const bool projecting = cfg.projection.mode != ProjectionMode::None;
  if (projecting && !has_exact_inverse(init.spec))
    throw ConfigError("ascend: projection needs a pixel or frequency parameterization");
  if (image_shape(init.spec) != Shape{net.input.channels, net.input.height, net.input.width})
    throw ShapeError("ascend: parameterization image " + shape_str(image_shape(init.spec)) + " does not fit the net input");

  std::mt19937_64 rng(derive_seed(cfg.seed, seed_tag::kAscent));
  const auto j = static_cast<std::ptrdiff_t>(cfg.jitter);
  std::uniform_int_distribution<std::ptrdiff_t> shift(-j, j);

  const bool relaxed_medium =
      std::holds_alternative<param::Halftone>(init.spec.kind) || std::holds_alternative<param::Palette>(init.spec.kind);
  const std::size_t hard_from = cfg.straight_through && relaxed_medium ? cfg.anneal.steps_to_floor() : cfg.steps;

  Tensor params = init.params;
  const Tensor init_image = decode(init, cfg.anneal.at(0));
  Tensor image = init_image;  // current iterate as an image

  Trajectory traj;
  traj.snapshots.push_back(take_snapshot(0, obj, init_image, net));

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double anneal = cfg.anneal.at(step);
    Tensor grad;
    try {
      Tape tape;
      const Var p = tape.leaf(params);
      Var x = decode_on_tape(init.spec, p, anneal);
      if (step >= hard_from) x = straight_through(x, finalize(Parameterization{init.spec, params}).image);
      if (cfg.jitter > 0) {
        const std::ptrdiff_t dy = shift(rng), dx = shift(rng);
        x = roll(x, dy, dx);
      }
      const Var total = objective_on_tape(obj, x, net).total;
      tape.backward(total);
      grad = tape.grad(p);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step) + ": " + e.what());
    }

    double scale = cfg.step_size;
    if (cfg.normalize_gradient) {
      double norm2 = 0.0;
      for (float g : grad.data()) norm2 += static_cast<double>(g) * g;
      scale = norm2 > 0 ? cfg.step_size / std::sqrt(norm2) : 0.0;
    }
    for (std::size_t i = 0; i < params.numel(); ++i)
      params[i] = static_cast<float>(params[i] + scale * grad[i]);
    if (!params.all_finite()) throw NumericError("step " + std::to_string(step) + ": parameters became non-finite");

    const double next_anneal = cfg.anneal.at(step + 1);
    if (projecting) {
      image = project(decode(Parameterization{init.spec, params}, next_anneal), init_image, cfg.projection);
      params = invert_image(init.spec, image);
    }
    const bool last = step + 1 == cfg.steps;
    if (last || (cfg.snapshot_interval > 0 && (step + 1) % cfg.snapshot_interval == 0)) {
      if (!projecting) image = decode(Parameterization{init.spec, params}, next_anneal);
      Snapshot snap = take_snapshot(step + 1, obj, image, net);
      if (!std::isfinite(snap.value)) throw NumericError("step " + std::to_string(step) + ": objective is not finite");
      traj.snapshots.push_back(std::move(snap));
    }
  }

  traj.final_param = Parameterization{init.spec, params};
  traj.artifact = projecting ? Artifact{image, std::monostate{}} : finalize(traj.final_param);
  return traj;
}

Stroke sample_stroke(std::uint64_t seed, std::size_t width, std::size_t height) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  Stroke s;
  s.primitive = unit(rng) < 0.5 ? StrokePrimitive::Disc : StrokePrimitive::Segment;
  s.x0 = static_cast<float>(unit(rng) * w);
  s.y0 = static_cast<float>(unit(rng) * h);
  s.x1 = static_cast<float>(s.x0 + (unit(rng) - 0.5) * w / 2);
  s.y1 = static_cast<float>(s.y0 + (unit(rng) - 0.5) * h / 2);
  s.size = static_cast<float>(1.0 + unit(rng) * std::max(w, h) / 6);
  for (auto& c : s.color_raw) c = static_cast<float>(logit(unit(rng)));
  s.opacity_raw = static_cast<float>(logit(0.3 + 0.7 * unit(rng)));
  return s;
}

Parameterization random_canvas(const Parameterization& canvas, std::size_t n, std::uint64_t seed) {
  const auto& spec = std::get<param::Strokes>(canvas.spec.kind);
  Parameterization out = canvas;
  for (std::size_t i = 0; i < n; ++i) out = append_stroke(out, sample_stroke(item_seed(seed, i), spec.width, spec.height));
  return out;
}

Trajectory blackbox_paint(const CompositeObjective& obj, const Parameterization& canvas, const RecognitionNet& net,
                          const PaintConfig& cfg) {
  const auto* spec = std::get_if<param::Strokes>(&canvas.spec.kind);
  if (!spec) throw ConfigError("paint: canvas must be a strokes parameterization");
  if (cfg.budget < 1) throw ConfigError("paint: budget must be >= 1");
  if (cfg.proposals < 1) throw ConfigError("paint: proposals must be >= 1");
  validate_spec(canvas.spec);
  validate_objective(obj, net);

  Parameterization current = canvas;
  Tensor image = decode(current);
  Trajectory traj;
  traj.snapshots.push_back(take_snapshot(0, obj, image, net));
  double value = traj.snapshots.back().value;
  const std::uint64_t stream = derive_seed(cfg.seed, seed_tag::kPaint);

  for (std::size_t step = 0; step < cfg.budget; ++step) {
    const std::uint64_t step_seed = item_seed(stream, step);
    std::vector<Stroke> strokes(cfg.proposals);
    std::vector<Tensor> images(cfg.proposals);
    std::vector<double> values(cfg.proposals);
    for (std::size_t k = 0; k < cfg.proposals; ++k)
      strokes[k] = sample_stroke(item_seed(step_seed, k), spec->width, spec->height);
    const auto n = static_cast<std::ptrdiff_t>(cfg.proposals);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      Tensor candidate = image;
      paint_stroke(candidate, strokes[static_cast<std::size_t>(k)]);
      // Exceptions must not escape the parallel region; a failed proposal just loses.
      try {
        values[static_cast<std::size_t>(k)] = objective_value(obj, candidate, net).value;
      } catch (const NumericError&) {
        values[static_cast<std::size_t>(k)] = -std::numeric_limits<double>::infinity();
      }
      images[static_cast<std::size_t>(k)] = std::move(candidate);
    }
    // Highest value wins; ties go to the lowest proposal index.
    std::size_t best = 0;
    for (std::size_t k = 1; k < cfg.proposals; ++k)
      if (values[k] > values[best]) best = k;
    if (!std::isfinite(values[best])) throw NumericError("paint step " + std::to_string(step) + ": objective is not finite");

    PaintStep log{step + 1, false, values[best], value};
    if (values[best] > value) {
      current = append_stroke(current, strokes[best]);
      image = std::move(images[best]);
      value = values[best];
      log.accepted = true;
      log.value = value;
      traj.snapshots.push_back(take_snapshot(step + 1, obj, image, net));
    }
    traj.paint_log.push_back(log);
  }

  traj.final_param = current;
  traj.artifact = finalize(current);
  return traj;
}

SuperstimulusResult superstimulus_ratio(const RecognitionNet& net, const ObjectiveTerm& term,
                                        const std::vector<Tensor>& dataset, const Tensor& image) {
  if (!is_activation_term(term)) throw ConfigError("superstimulus: " + term_name(term) + " is not an activation term");
  if (dataset.empty()) throw ConfigError("superstimulus: empty dataset");
  validate_term(term, net);
  SuperstimulusResult r;
  r.image_value = term_value(term, image, net);
  std::vector<double> values(dataset.size());
  const auto n = static_cast<std::ptrdiff_t>(dataset.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    values[static_cast<std::size_t>(i)] = term_value(term, dataset[static_cast<std::size_t>(i)], net);
  r.dataset_max = *std::max_element(values.begin(), values.end());
  if (r.dataset_max > 0) r.ratio = r.image_value / r.dataset_max;
  return r;
}

}  // namespace sopt
