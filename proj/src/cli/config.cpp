#include "cli/config.hpp"

#include <fstream>
#include <sstream>

#include "sopt/error.hpp"

namespace sopt::cli {

namespace {

json data_section() {
  return {{"manifest", ""}, {"per_class", 500}, {"size", 32}, {"color", "rgb"}, {"noise", 0.04}, {"heldout_per_class", 50}, {"seed", nullptr}};
}

json ascent_section(std::size_t steps, std::size_t jitter, std::size_t snapshot_interval) {
  return {{"steps", steps},
          {"step_size", 0.05},
          {"normalize_gradient", true},
          {"straight_through", true},
          {"jitter", jitter},
          {"projection", {{"mode", "none"}, {"epsilon", 0.0}}},
          {"anneal", {{"start", 1.0}, {"factor", 0.85}, {"every", 50}, {"floor", 0.05}}},
          {"snapshot_interval", snapshot_interval}};
}

json param_section(const std::string& kind, const std::string& init) {
  return {{"kind", kind},
          {"init", init},
          {"cell", 2},
          {"temperature", 1.0},
          {"colors", 4},
          {"stroke_size", 2},
          {"palette_temperature", 0.05},
          {"inner", "pixel"},
          {"background", {1.0, 1.0, 1.0}}};
}

std::string type_name(const json& j) { return j.type_name(); }

bool compatible(const json& def, const json& v) {
  if (def.is_null()) return true;
  if (def.is_number_unsigned() || def.is_number_integer()) return v.is_number_integer() && v.get<long long>() >= 0;
  if (def.is_number_float()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  return parts;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fv", "dream", "style", "so", "medium", "paint"};
  return names;
}

json default_config(const std::string& command, const std::string& preset) {
  if (command == "train") {
    return {{"seed", 1},
            {"out", "run"},
            {"data", data_section()},
            {"train",
             {{"epochs", 10}, {"batch_size", 32}, {"learning_rate", 0.02}, {"momentum", 0.9}, {"validation_fraction", 0.1}}}};
  }
  if (command == "eval") {
    return {{"seed", 1},
            {"out", "run"},
            {"checkpoint", "checkpoint.sopt"},
            {"checkpoint_b", ""},
            {"corpus", ""},
            {"data", data_section()}};
  }
  if (command != "synth") throw ConfigError("unknown command: " + command);

  json cfg = {{"seed", 1},
              {"out", "run"},
              {"checkpoint", "checkpoint.sopt"},
              {"preset", preset},
              {"class", "circle"},
              {"layer", nullptr},
              {"content_layer", nullptr},
              {"content", "heldout:0"},
              {"style", "texture:waves:1"},
              {"weights", {{"alpha", 1.0}, {"beta", 100.0}, {"tv", 0.1}, {"activation", 1.0}}},
              {"objective", json::array()},
              {"superstimulus", {{"images", 0}}},
              {"data", data_section()}};
  if (preset == "fv") {
    // Spectral preconditioning: with normalized pixel steps 512 steps barely leave the grey start.
    cfg["param"] = param_section("frequency", "noise");
    cfg["ascent"] = ascent_section(512, 2, 64);
    cfg["superstimulus"]["images"] = 1000;
  } else if (preset == "dream") {
    cfg["param"] = param_section("pixel", "from_image");
    cfg["ascent"] = ascent_section(100, 2, 25);
    cfg["weights"]["tv"] = 0.0;
    cfg["superstimulus"]["images"] = 1000;
  } else if (preset == "style") {
    cfg["param"] = param_section("pixel", "from_image");
    cfg["ascent"] = ascent_section(200, 0, 50);
    cfg["weights"]["tv"] = 0.0;
  } else if (preset == "so") {
    cfg["param"] = param_section("pixel", "from_image");
    cfg["ascent"] = ascent_section(200, 0, 50);
    cfg["weights"]["tv"] = 0.0;
    cfg["weights"]["activation"] = 0.1;
  } else if (preset == "medium") {
    cfg["param"] = param_section("halftone", "from_image");
    cfg["param"]["cell"] = 1;
    cfg["ascent"] = ascent_section(1000, 0, 100);
    cfg["weights"]["tv"] = 0.0;
    cfg["weights"]["beta"] = 0.0;
  } else if (preset == "paint") {
    cfg["param"] = param_section("strokes", "noise");
    cfg["paint"] = {{"budget", 100}, {"proposals", 32}};
    cfg["weights"]["tv"] = 0.0;
  } else {
    throw ConfigError("unknown preset: " + preset);
  }
  return cfg;
}

void merge_config(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config" + (path.empty() ? "" : " key " + path) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key: " + full);
    json& slot = base[key];
    if (!compatible(slot, value))
      throw ConfigError("config key " + full + ": expected " + type_name(slot) + ", got " + type_name(value));
    if (slot.is_object())
      merge_config(slot, value, full);
    else
      slot = value;
  }
}

json set_patch(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got: " + assignment);
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  const auto parts = split_path(key);
  json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("--set: empty path component in " + key);
    patch = json{{*it, patch}};
  }
  return patch;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

const json& get_node(const json& cfg, const std::string& dotted) {
  const json* node = &cfg;
  for (const auto& part : split_path(dotted)) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("missing config key: " + dotted);
    node = &(*node)[part];
  }
  return *node;
}

std::size_t get_size(const json& cfg, const std::string& dotted) {
  const json& n = get_node(cfg, dotted);
  if (!n.is_number_integer() || n.get<long long>() < 0) throw ConfigError(dotted + " must be a non-negative integer");
  return n.get<std::size_t>();
}

double get_double(const json& cfg, const std::string& dotted) {
  const json& n = get_node(cfg, dotted);
  if (!n.is_number()) throw ConfigError(dotted + " must be a number");
  return n.get<double>();
}

std::string get_string(const json& cfg, const std::string& dotted) {
  const json& n = get_node(cfg, dotted);
  if (!n.is_string()) throw ConfigError(dotted + " must be a string");
  return n.get<std::string>();
}

bool get_bool(const json& cfg, const std::string& dotted) {
  const json& n = get_node(cfg, dotted);
  if (!n.is_boolean()) throw ConfigError(dotted + " must be true or false");
  return n.get<bool>();
}

}  // namespace sopt::cli
