#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "cli/config.hpp"
#include "sopt/cli.hpp"
#include "sopt/data.hpp"
#include "sopt/image_io.hpp"
#include "sopt/net.hpp"
#include "sopt/objectives.hpp"
#include "sopt/optimize.hpp"
#include "sopt/paramspace.hpp"
#include "sopt/rng.hpp"

namespace sopt {

namespace fs = std::filesystem;
using cli::json;

namespace {

struct Invocation {
  std::string command;
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::string inspect_path;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw MissingInputError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string image_ext(const Tensor& image) { return image.dim(0) == 1 ? ".pgm" : ".ppm"; }

std::uint64_t data_seed(const json& cfg) {
  const json& s = cli::get_node(cfg, "data.seed");
  if (s.is_null()) return cfg.at("seed").get<std::uint64_t>();
  if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("data.seed must be a non-negative integer");
  return s.get<std::uint64_t>();
}

ShapesSpec shapes_spec(const json& cfg, std::vector<std::string> classes, std::size_t size, std::size_t channels) {
  ShapesSpec spec;
  spec.classes = std::move(classes);
  spec.size = size;
  spec.color = channels == 1 ? ColorMode::Gray : ColorMode::Rgb;
  spec.noise_std = cli::get_double(cfg, "data.noise");
  spec.validate();
  return spec;
}

ShapesSpec shapes_spec_for(const json& cfg, const RecognitionNet& net) {
  if (net.input.height != net.input.width) throw ConfigError("shape images need a square net input");
  return shapes_spec(cfg, net.class_names, net.input.height, net.input.channels);
}

std::vector<LabeledImage> heldout_set(const json& cfg, const RecognitionNet& net) {
  return generate_shapes(shapes_spec_for(cfg, net), cli::get_size(cfg, "data.heldout_per_class"),
                         derive_seed(data_seed(cfg), seed_tag::kHeldOut));
}

std::vector<LabeledImage> training_set(const json& cfg, const ShapesSpec& spec) {
  return generate_shapes(spec, cli::get_size(cfg, "data.per_class"), derive_seed(data_seed(cfg), seed_tag::kShapes));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  return parts;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected an integer, got '" + s + "'");
  }
}

// Image sources: "shape:<class>:<seed>", "texture:<kind>:<seed>",
// "heldout:<index>" or a P5/P6 file path.
Tensor resolve_image(const std::string& source, const json& cfg, const RecognitionNet& net) {
  const auto parts = split(source, ':');
  const Shape want{net.input.channels, net.input.height, net.input.width};
  if (parts.size() == 3 && parts[0] == "shape") {
    auto spec = shapes_spec_for(cfg, net);
    spec.classes = {parts[1]};
    parse_shape_kind(parts[1]);
    return generate_shapes(spec, 1, parse_u64(parts[2], source)).front().image;
  }
  if (parts.size() == 3 && parts[0] == "texture") {
    if (net.input.height != net.input.width) throw ConfigError("textures need a square net input");
    return render_texture(parse_texture_kind(parts[1]), net.input.height, net.input.channels, parse_u64(parts[2], source));
  }
  if (parts.size() == 2 && parts[0] == "heldout") {
    const auto index = parse_u64(parts[1], source);
    auto set = heldout_set(cfg, net);
    if (index >= set.size()) throw ConfigError(source + ": held-out set has " + std::to_string(set.size()) + " images");
    return std::move(set[index].image);
  }
  if (!fs::exists(source)) throw MissingInputError("image not found: " + source);
  Tensor image = read_pnm(source);
  if (image.shape() != want)
    throw ConfigError(source + ": image is " + shape_str(image.shape()) + ", net expects " + shape_str(want));
  return image;
}

std::size_t layer_or(const json& cfg, const std::string& key, std::size_t fallback) {
  const json& n = cli::get_node(cfg, key);
  if (n.is_null()) return fallback;
  return cli::get_size(cfg, key);
}

Direction parse_direction(const std::string& s) {
  if (s == "maximize") return Direction::Maximize;
  if (s == "minimize") return Direction::Minimize;
  throw ConfigError("direction must be maximize or minimize, got '" + s + "'");
}

struct SynthInputs {
  std::optional<Tensor> content, style;
  const Tensor& need_content() const {
    if (!content) throw ConfigError("this objective needs a content image");
    return *content;
  }
  const Tensor& need_style() const {
    if (!style) throw ConfigError("this objective needs a style image");
    return *style;
  }
};

ObjectiveTerm term_from_json(const json& t, const json& cfg, const RecognitionNet& net, const SynthInputs& in) {
  static const std::vector<std::string> allowed = {"term", "weight", "direction", "class", "layer", "channel", "y", "x"};
  for (const auto& [key, value] : t.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown config key: objective[]." + key);
  const std::string name = cli::get_string(t, "term");
  auto size_or = [&](const char* key, std::size_t fallback) {
    return t.contains(key) ? cli::get_size(t, key) : fallback;
  };
  const std::size_t deep = net.conv_activation_layers().back();
  if (name == "class_probability") return term::ClassProbability{net.class_index(t.value("class", cli::get_string(cfg, "class")))};
  if (name == "class_logit") return term::ClassLogit{net.class_index(t.value("class", cli::get_string(cfg, "class")))};
  if (name == "neuron")
    return term::Neuron{size_or("layer", deep), size_or("channel", 0), size_or("y", 0), size_or("x", 0)};
  if (name == "channel_mean") return term::ChannelMean{size_or("layer", deep), size_or("channel", 0)};
  if (name == "layer_l2") return term::LayerL2{size_or("layer", deep)};
  if (name == "content_loss") {
    const std::size_t layer = size_or("layer", layer_or(cfg, "content_layer", deep));
    if (layer >= net.layers.size()) throw ConfigError("content layer out of range");
    return term::ContentLoss{layer, representation(net, in.need_content(), {layer}).at(layer)};
  }
  if (name == "style_loss") return term::StyleLoss{style_signature(net, in.need_style())};
  if (name == "total_variation") return term::TotalVariation{};
  if (name == "l2_distance") return term::L2Distance{in.need_content()};
  throw ConfigError("unknown objective term '" + name + "'");
}

CompositeObjective build_objective(const json& cfg, const RecognitionNet& net, const SynthInputs& in) {
  CompositeObjective obj;
  const json& custom = cli::get_node(cfg, "objective");
  if (!custom.empty()) {
    for (const auto& t : custom) {
      if (!t.is_object()) throw ConfigError("objective entries must be objects");
      const double weight = t.contains("weight") ? cli::get_double(t, "weight") : 1.0;
      const Direction dir = parse_direction(t.value("direction", std::string("maximize")));
      obj.terms.push_back({term_from_json(t, cfg, net, in), weight, dir});
    }
    return obj;
  }
  const std::string preset = cli::get_string(cfg, "preset");
  const std::size_t deep = net.conv_activation_layers().back();
  const std::size_t layer = layer_or(cfg, "layer", deep);
  // Halftone loses colour and texture, so the medium preset matches the content's logits rather than its features.
  const std::size_t content_layer = layer_or(cfg, "content_layer", preset == "medium" ? net.layers.size() - 1 : deep);
  const double alpha = cli::get_double(cfg, "weights.alpha"), beta = cli::get_double(cfg, "weights.beta");
  const double tv = cli::get_double(cfg, "weights.tv"), act = cli::get_double(cfg, "weights.activation");
  auto add_content = [&] {
    if (content_layer >= net.layers.size()) throw ConfigError("content_layer out of range");
    obj.terms.push_back({term::ContentLoss{content_layer, representation(net, in.need_content(), {content_layer}).at(content_layer)},
                         alpha, Direction::Minimize});
  };
  auto add_style = [&] { obj.terms.push_back({term::StyleLoss{style_signature(net, in.need_style())}, beta, Direction::Minimize}); };

  if (preset == "fv" || preset == "paint") {
    obj.terms.push_back({term::ClassLogit{net.class_index(cli::get_string(cfg, "class"))}, act, Direction::Maximize});
  } else if (preset == "dream") {
    obj.terms.push_back({term::LayerL2{layer}, act, Direction::Maximize});
  } else if (preset == "style") {
    add_content();
    add_style();
  } else if (preset == "so") {
    obj.terms.push_back({term::LayerL2{layer}, act, Direction::Maximize});
    add_style();
    add_content();
  } else if (preset == "medium") {
    add_content();
    if (beta > 0) add_style();
  }
  if (tv > 0) obj.terms.push_back({term::TotalVariation{}, tv, Direction::Minimize});
  return obj;
}

ParamSpec build_spec(const json& p, const std::string& kind, const RecognitionNet& net, std::size_t h, std::size_t w) {
  const std::size_t c = net.input.channels;
  if (kind == "pixel") return ParamSpec{param::Pixel{c, h, w}};
  if (kind == "frequency") return ParamSpec{param::Frequency{c, h, w}};
  if (kind == "halftone") {
    const std::size_t cell = cli::get_size(p, "cell");
    if (cell == 0 || h % cell || w % cell) throw ConfigError("param.cell must divide the image size");
    return ParamSpec{param::Halftone{h / cell, w / cell, cell, c, cli::get_double(p, "temperature")}};
  }
  if (kind == "strokes") {
    const json& bg = cli::get_node(p, "background");
    if (bg.size() != 3 || !std::all_of(bg.begin(), bg.end(), [](const json& v) { return v.is_number(); }))
      throw ConfigError("param.background must be three numbers");
    param::Strokes s;
    for (std::size_t i = 0; i < 3; ++i) s.background[i] = bg[i].get<float>();
    s.channels = c;
    s.height = h;
    s.width = w;
    return ParamSpec{s};
  }
  if (kind == "palette") {
    const std::size_t stroke = cli::get_size(p, "stroke_size");
    if (stroke == 0 || h % stroke || w % stroke) throw ConfigError("param.stroke_size must divide the image size");
    const std::string inner = cli::get_string(p, "inner");
    if (inner == "palette" || inner == "strokes") throw ConfigError("param.inner must be pixel, frequency or halftone");
    param::Palette pal;
    pal.colors = cli::get_size(p, "colors");
    pal.stroke_size = stroke;
    pal.temperature = cli::get_double(p, "palette_temperature");
    pal.inner = std::make_shared<const ParamSpec>(build_spec(p, inner, net, h / stroke, w / stroke));
    return ParamSpec{pal};
  }
  throw ConfigError("unknown param.kind '" + kind + "'");
}

AscentConfig ascent_config(const json& cfg) {
  AscentConfig a;
  a.steps = cli::get_size(cfg, "ascent.steps");
  a.step_size = cli::get_double(cfg, "ascent.step_size");
  a.normalize_gradient = cli::get_bool(cfg, "ascent.normalize_gradient");
  a.straight_through = cli::get_bool(cfg, "ascent.straight_through");
  a.jitter = cli::get_size(cfg, "ascent.jitter");
  const std::string mode = cli::get_string(cfg, "ascent.projection.mode");
  if (mode == "none")
    a.projection.mode = ProjectionMode::None;
  else if (mode == "l2")
    a.projection.mode = ProjectionMode::L2;
  else if (mode == "linf")
    a.projection.mode = ProjectionMode::Linf;
  else
    throw ConfigError("ascent.projection.mode must be none, l2 or linf");
  a.projection.epsilon = cli::get_double(cfg, "ascent.projection.epsilon");
  a.anneal.start = cli::get_double(cfg, "ascent.anneal.start");
  a.anneal.factor = cli::get_double(cfg, "ascent.anneal.factor");
  a.anneal.every = cli::get_size(cfg, "ascent.anneal.every");
  a.anneal.floor = cli::get_double(cfg, "ascent.anneal.floor");
  a.snapshot_interval = cli::get_size(cfg, "ascent.snapshot_interval");
  a.seed = cfg.at("seed").get<std::uint64_t>();
  validate_ascent(a);
  return a;
}

std::vector<std::string> term_names(const CompositeObjective& obj) {
  std::vector<std::string> names;
  for (const auto& t : obj.terms) names.push_back(term_name(t.term));
  return names;
}

json snapshot_json(const Snapshot& s, const std::vector<std::string>& names, const std::string& file) {
  json terms = json::object();
  for (std::size_t i = 0; i < names.size() && i < s.term_values.size(); ++i) {
    // Repeated term kinds get an index suffix.
    std::string key = names[i];
    if (terms.contains(key)) key += "_" + std::to_string(i);
    terms[key] = s.term_values[i];
  }
  return {{"step", s.step}, {"value", s.value}, {"terms", terms}, {"image", file}};
}

json config_echo(const std::string& command, const json& cfg) { return {{"command", command}, {"config", cfg}}; }

int cmd_train(const json& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = cli::get_string(cfg, "out");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

  TrainConfig tc;
  tc.epochs = cli::get_size(cfg, "train.epochs");
  tc.batch_size = cli::get_size(cfg, "train.batch_size");
  tc.learning_rate = cli::get_double(cfg, "train.learning_rate");
  tc.momentum = cli::get_double(cfg, "train.momentum");
  tc.validation_fraction = cli::get_double(cfg, "train.validation_fraction");
  tc.seed = seed;
  tc.validate();

  std::vector<LabeledImage> data;
  std::vector<std::string> classes;
  const std::string manifest = cli::get_string(cfg, "data.manifest");
  if (!manifest.empty()) {
    Manifest m = load_manifest(manifest);
    data = std::move(m.images);
    classes = std::move(m.class_names);
  } else {
    const std::string color = cli::get_string(cfg, "data.color");
    if (color != "rgb" && color != "gray") throw ConfigError("data.color must be rgb or gray");
    const std::size_t size = cli::get_size(cfg, "data.size");
    const auto spec = shapes_spec(cfg, all_shape_names(), size, color == "gray" ? 1 : 3);
    data = training_set(cfg, spec);
    classes = spec.classes;
  }
  if (data.empty()) throw ConfigError("training set is empty");
  const Tensor& first = data.front().image;
  const ImageShape input{first.dim(0), first.dim(1), first.dim(2)};
  RecognitionNet net = build_net(small_net_8(classes.size()), input, classes.size(),
                                 derive_seed(seed, seed_tag::kNetInit), classes);
  fs::create_directories(dir);
  TrainResult result = train(std::move(net), data, tc);
  save_checkpoint(result.net, (dir / "checkpoint.sopt").string());

  json epochs = json::array();
  for (const auto& e : result.epochs) {
    json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}};
    row["validation_accuracy"] = e.validation_accuracy ? json(*e.validation_accuracy) : json(nullptr);
    epochs.push_back(row);
  }
  const auto& last = result.epochs.back();
  json metrics = {{"initial_loss", result.initial_loss},
                  {"epochs", epochs},
                  {"validation_accuracy", last.validation_accuracy ? json(*last.validation_accuracy) : json(nullptr)}};
  write_json(dir / "metrics.json", metrics);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json man = config_echo("train", cfg);
  man["engine_version"] = kEngineVersion;
  man["timing_seconds"] = secs;
  man["outputs"] = {{"checkpoint", "checkpoint.sopt"}, {"metrics", "metrics.json"}};
  man["validation_accuracy"] = metrics["validation_accuracy"];
  write_json(dir / "manifest.json", man);

  out << "trained " << tc.epochs << " epochs on " << data.size() << " images";
  if (last.validation_accuracy) out << ", validation accuracy " << *last.validation_accuracy;
  out << "\nwrote " << (dir / "checkpoint.sopt").string() << "\n";
  return kExitOk;
}

int cmd_synth(const json& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = cli::get_string(cfg, "out");
  const std::string ckpt = cli::get_string(cfg, "checkpoint");
  if (!fs::exists(ckpt)) throw MissingInputError("checkpoint not found: " + ckpt);
  const RecognitionNet net = load_checkpoint(ckpt);
  const std::string preset = cli::get_string(cfg, "preset");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

  const json& p = cli::get_node(cfg, "param");
  const std::string init_mode = cli::get_string(p, "init");
  if (init_mode != "noise" && init_mode != "from_image") throw ConfigError("param.init must be noise or from_image");

  // Only resolve the images the run uses.
  const bool custom = !cli::get_node(cfg, "objective").empty();
  bool wants_content = init_mode == "from_image" || preset == "style" || preset == "so" || preset == "medium";
  bool wants_style = preset == "style" || preset == "so" || (preset == "medium" && cli::get_double(cfg, "weights.beta") > 0);
  if (custom) {
    wants_content = init_mode == "from_image";
    wants_style = false;
    for (const auto& t : cli::get_node(cfg, "objective")) {
      const std::string name = t.is_object() ? t.value("term", std::string()) : std::string();
      wants_content |= name == "content_loss" || name == "l2_distance";
      wants_style |= name == "style_loss";
    }
  }
  SynthInputs in;
  if (wants_content) in.content = resolve_image(cli::get_string(cfg, "content"), cfg, net);
  if (wants_style) in.style = resolve_image(cli::get_string(cfg, "style"), cfg, net);

  const CompositeObjective obj = build_objective(cfg, net, in);
  validate_objective(obj, net);
  const ParamSpec spec = build_spec(p, cli::get_string(p, "kind"), net, net.input.height, net.input.width);
  validate_spec(spec);
  const Parameterization init = init_param(spec, init_mode == "noise" ? InitMode::Noise : InitMode::FromImage,
                                           in.content ? &*in.content : nullptr, seed);

  Trajectory traj;
  if (preset == "paint") {
    if (!std::holds_alternative<param::Strokes>(spec.kind)) throw ConfigError("preset paint needs param.kind strokes");
    PaintConfig pc;
    pc.budget = cli::get_size(cfg, "paint.budget");
    pc.proposals = cli::get_size(cfg, "paint.proposals");
    pc.seed = seed;
    traj = blackbox_paint(obj, init, net, pc);
  } else {
    traj = ascend(obj, init, net, ascent_config(cfg));
  }

  fs::create_directories(dir);
  const auto names = term_names(obj);
  json snaps = json::array();
  char buf[64];
  for (const auto& s : traj.snapshots) {
    std::snprintf(buf, sizeof buf, "snap_%05zu", s.step);
    const std::string file = buf + image_ext(s.image);
    write_pnm((dir / file).string(), s.image);
    snaps.push_back(snapshot_json(s, names, file));
  }
  const Tensor& artifact = traj.artifact.image;
  const std::string final_file = "final" + image_ext(artifact);
  write_pnm((dir / final_file).string(), artifact);

  json outputs = {{"final", final_file}, {"metrics", "metrics.json"}};
  if (const auto* grid = std::get_if<CutGrid>(&traj.artifact.medium)) {
    write_text(dir / "cuts.txt", cut_plan_text(*grid));
    outputs["medium"] = "cuts.txt";
  } else if (const auto* prog = std::get_if<StrokeProgram>(&traj.artifact.medium)) {
    write_text(dir / "medium.svg", strokes_svg(*prog));
    outputs["medium"] = "medium.svg";
  } else if (const auto* pal = std::get_if<PaletteAssignment>(&traj.artifact.medium)) {
    json colors = json::array();
    for (const auto& c : pal->colors) colors.push_back({c[0], c[1], c[2]});
    write_json(dir / "palette.json", {{"colors", colors}, {"rows", pal->rows}, {"cols", pal->cols}, {"index", pal->index}});
    outputs["medium"] = "palette.json";
  }

  const ObjectiveValue artifact_value = objective_value(obj, artifact, net);
  json man = config_echo("synth", cfg);
  man["engine_version"] = kEngineVersion;
  man["terms"] = names;
  man["initial_objective"] = traj.snapshots.front().value;
  man["final_objective"] = traj.snapshots.back().value;
  man["artifact_objective"] = artifact_value.value;
  man["snapshots"] = snaps;
  if (!traj.paint_log.empty()) {
    std::size_t accepted = 0;
    for (const auto& s : traj.paint_log) accepted += s.accepted;
    man["strokes_accepted"] = accepted;
  }

  const std::size_t ss_images = cli::get_size(cfg, "superstimulus.images");
  const auto act = std::find_if(obj.terms.begin(), obj.terms.end(), [](const WeightedTerm& t) {
    return is_activation_term(t.term) && t.direction == Direction::Maximize;
  });
  if (ss_images > 0 && act != obj.terms.end()) {
    const auto all = training_set(cfg, shapes_spec_for(cfg, net));
    const std::size_t n = std::min(ss_images, all.size());
    std::vector<Tensor> sample;
    for (std::size_t i = 0; i < n; ++i) sample.push_back(all[i * all.size() / n].image);
    const auto r = superstimulus_ratio(net, act->term, sample, artifact);
    man["superstimulus"] = {{"term", term_name(act->term)},
                            {"images", n},
                            {"image_value", r.image_value},
                            {"dataset_max", r.dataset_max},
                            {"ratio", r.ratio ? json(*r.ratio) : json(nullptr)}};
  }
  man["outputs"] = outputs;
  man["timing_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "metrics.json", {{"terms", names}, {"snapshots", snaps}});
  write_json(dir / "manifest.json", man);

  out << preset << ": objective " << man["initial_objective"].get<double>() << " -> "
      << man["final_objective"].get<double>() << " (artifact " << artifact_value.value << ")\n";
  if (man.contains("superstimulus") && !man["superstimulus"]["ratio"].is_null())
    out << "superstimulus ratio " << man["superstimulus"]["ratio"].get<double>() << "\n";
  out << "wrote " << (dir / final_file).string() << "\n";
  return kExitOk;
}

json eval_block(const RecognitionNet& net, const std::vector<LabeledImage>& corpus) {
  const EvalResult r = evaluate(net, corpus);
  // Corpus labels are content labels, so retention is top-1 accuracy on them.
  return {{"accuracy", r.accuracy}, {"retention", r.accuracy}, {"confusion", r.confusion}};
}

int cmd_eval(const json& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = cli::get_string(cfg, "out");
  const std::string ckpt = cli::get_string(cfg, "checkpoint");
  if (!fs::exists(ckpt)) throw MissingInputError("checkpoint not found: " + ckpt);
  const RecognitionNet net = load_checkpoint(ckpt);
  const std::string corpus_dir = cli::get_string(cfg, "corpus");
  const std::vector<LabeledImage> corpus =
      corpus_dir.empty() ? heldout_set(cfg, net) : load_manifest(corpus_dir, net.class_names).images;
  if (corpus.empty()) throw ConfigError("evaluation corpus is empty");

  json report = {{"images", corpus.size()}, {"classes", net.class_names}, {"net_a", eval_block(net, corpus)}};
  const std::string ckpt_b = cli::get_string(cfg, "checkpoint_b");
  if (!ckpt_b.empty()) {
    if (!fs::exists(ckpt_b)) throw MissingInputError("checkpoint not found: " + ckpt_b);
    const RecognitionNet net_b = load_checkpoint(ckpt_b);
    report["net_b"] = eval_block(net_b, corpus);
    std::vector<Tensor> images;
    for (const auto& c : corpus) images.push_back(c.image);
    report["agreement"] = cross_net_agreement(net, net_b, images).rate;
    report["retention_gap"] = report["net_a"]["retention"].get<double>() - report["net_b"]["retention"].get<double>();
  }
  fs::create_directories(dir);
  write_json(dir / "report.json", report);
  json man = config_echo("eval", cfg);
  man["engine_version"] = kEngineVersion;
  man["outputs"] = {{"report", "report.json"}};
  man["timing_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "manifest.json", man);

  out << "accuracy " << report["net_a"]["accuracy"].get<double>() << " on " << corpus.size() << " images\n";
  if (report.contains("net_b"))
    out << "second net accuracy " << report["net_b"]["accuracy"].get<double>() << ", agreement "
        << report["agreement"].get<double>() << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  if (!fs::exists(path)) throw MissingInputError("not found: " + path);
  std::ifstream f(path, std::ios::binary);
  char magic[4] = {};
  f.read(magic, 4);
  if (f.gcount() == 4 && std::string(magic, 4) == "SOPT") {
    const RecognitionNet net = load_checkpoint(path);
    const auto shapes = net.layer_shapes();
    out << "checkpoint " << path << "\ninput " << net.input.channels << "x" << net.input.height << "x" << net.input.width
        << ", " << net.classes << " classes:";
    for (const auto& c : net.class_names) out << ' ' << c;
    out << "\n";
    std::size_t total = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      std::size_t count = 0;
      for (const auto& t : net.params[i]) count += t.numel();
      total += count;
      out << "  " << i << ' ' << layer_name(net.layers[i]) << " -> " << shape_str(shapes[i]);
      if (count) out << " (" << count << " params)";
      out << "\n";
    }
    out << "parameters " << total << "\n";
    return kExitOk;
  }
  const json m = cli::load_json_file(path);
  if (!m.is_object() || !m.contains("command") || !m.contains("config")) throw ConfigError(path + ": not a run manifest");
  out << "manifest " << path << "\ncommand " << m["command"].get<std::string>() << "\n";
  if (m["config"].contains("preset")) out << "preset " << m["config"]["preset"].get<std::string>() << "\n";
  out << "seed " << m["config"]["seed"] << "\n";
  for (const char* key : {"initial_objective", "final_objective", "artifact_objective", "validation_accuracy"})
    if (m.contains(key)) out << key << ' ' << m[key] << "\n";
  if (m.contains("superstimulus")) out << "superstimulus " << m["superstimulus"].dump() << "\n";
  if (m.contains("outputs")) out << "outputs " << m["outputs"].dump() << "\n";
  return kExitOk;
}

// Builds the effective config: defaults for the command (and preset), then
// the config file, --set patches, --out and --seed in that order.
json resolve_config(const Invocation& inv) {
  std::vector<json> patches;
  if (!inv.config_path.empty()) {
    json file = cli::load_json_file(inv.config_path);
    // A run manifest replays its echoed config.
    if (file.is_object() && file.contains("command") && file.contains("config") && file.contains("engine_version")) {
      if (file["command"] != inv.command)
        throw ConfigError("manifest was written by '" + file["command"].get<std::string>() + "', not '" + inv.command + "'");
      file = file["config"];
    }
    patches.push_back(file);
  }
  for (const auto& s : inv.sets) patches.push_back(cli::set_patch(s));

  std::string preset = "fv";
  if (inv.command == "synth") {
    for (const auto& p : patches)
      if (p.is_object() && p.contains("preset")) {
        if (!p["preset"].is_string()) throw ConfigError("preset must be a string");
        preset = p["preset"].get<std::string>();
      }
    if (inv.preset) preset = *inv.preset;
  }
  json cfg = cli::default_config(inv.command, preset);
  for (const auto& p : patches) cli::merge_config(cfg, p);
  if (inv.command == "synth") cfg["preset"] = preset;
  if (inv.out) cfg["out"] = *inv.out;
  if (inv.seed) cfg["seed"] = *inv.seed;
  return cfg;
}

int dispatch(const Invocation& inv, std::ostream& out) {
  if (inv.command == "inspect") return cmd_inspect(inv.inspect_path, out);
  const json cfg = resolve_config(inv);
  if (inv.command == "train") return cmd_train(cfg, out);
  if (inv.command == "synth") return cmd_synth(cfg, out);
  return cmd_eval(cfg, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensory optimization engine: train a recognition net and synthesize images against it", "sopt"};
  app.require_subcommand(1);
  Invocation inv;
  auto common = [&inv](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "JSON config file or run manifest to replay");
    sub->add_option("--set", inv.sets, "Override a config key: dotted.key=value")->take_all();
    sub->add_option("--out", inv.out, "Output directory");
    sub->add_option("--seed", inv.seed, "Top-level seed");
  };
  auto* train_cmd = app.add_subcommand("train", "Train the recognition net on synthetic shapes or a manifest corpus");
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize an image: fv, dream, style, so, medium or paint preset");
  auto* eval_cmd = app.add_subcommand("eval", "Classification report, retention and cross-net agreement");
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a checkpoint or run manifest");
  common(train_cmd);
  common(synth_cmd);
  common(eval_cmd);
  synth_cmd->add_option("--preset", inv.preset, "Synthesis preset")->check(CLI::IsMember(cli::preset_names()));
  inspect_cmd->add_option("path", inv.inspect_path, "Checkpoint or manifest")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  for (auto* sub : {train_cmd, synth_cmd, eval_cmd, inspect_cmd})
    if (sub->parsed()) inv.command = sub->get_name();

  try {
    return dispatch(inv, out);
  } catch (const MissingInputError& e) {
    err << "missing input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const ManifestError& e) {
    err << "corpus: " << e.what() << "\n";
    const bool missing = e.code() == ManifestErrorCode::MissingManifest || e.code() == ManifestErrorCode::MissingFile;
    return missing ? kExitMissingInput : kExitConfig;
  } catch (const FormatError& e) {
    err << "unreadable input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sopt
