#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace sopt::cli {

using json = nlohmann::json;

// Default configuration documents. Every accepted key appears here; anything
// else in a user config is rejected.
json default_config(const std::string& command, const std::string& preset = "fv");

// Overlays `patch` onto `base`. Unknown keys and type mismatches throw
// ConfigError naming the dotted path.
void merge_config(json& base, const json& patch, const std::string& path = "");

// Parses "a.b.c=value"; the value is read as JSON when it parses, otherwise
// as a string.
json set_patch(const std::string& assignment);

json load_json_file(const std::string& path);

// Typed accessors that name the key on failure.
std::size_t get_size(const json& cfg, const std::string& dotted);
double get_double(const json& cfg, const std::string& dotted);
std::string get_string(const json& cfg, const std::string& dotted);
bool get_bool(const json& cfg, const std::string& dotted);
const json& get_node(const json& cfg, const std::string& dotted);

const std::vector<std::string>& preset_names();

}  // namespace sopt::cli
