#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "sopt/data.hpp"
#include "sopt/image_io.hpp"

namespace sopt {

namespace fs = std::filesystem;

namespace {
std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}
}  // namespace

Manifest load_manifest(const std::string& dir, const std::optional<std::vector<std::string>>& expected_classes) {
  const fs::path csv = fs::path(dir) / "manifest.csv";
  std::ifstream in(csv);
  if (!in) throw ManifestError(ManifestErrorCode::MissingManifest, "manifest not found: " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ManifestError(ManifestErrorCode::MalformedHeader, csv.string() + ": empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line = line.substr(3);
  if (strip(line) != "filename,label")
    throw ManifestError(ManifestErrorCode::MalformedHeader,
                        csv.string() + ": header must be 'filename,label', got '" + strip(line) + "'");

  std::vector<std::pair<std::string, std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ManifestError(ManifestErrorCode::MalformedRow,
                          csv.string() + ":" + std::to_string(line_no) + ": expected 'filename,label'");
    std::string file = strip(line.substr(0, comma)), label = strip(line.substr(comma + 1));
    if (file.empty() || label.empty())
      throw ManifestError(ManifestErrorCode::MalformedRow,
                          csv.string() + ":" + std::to_string(line_no) + ": empty filename or label");
    rows.emplace_back(std::move(file), std::move(label));
  }

  Manifest out;
  if (expected_classes) {
    out.class_names = *expected_classes;
  } else {
    std::set<std::string> unique;
    for (const auto& r : rows) unique.insert(r.second);
    out.class_names.assign(unique.begin(), unique.end());
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.class_names.size(); ++i) index[out.class_names[i]] = i;

  std::optional<Shape> first_shape;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [file, label] = rows[r];
    const std::string where = "row " + std::to_string(r + 1) + " (" + file + ")";
    const auto it = index.find(label);
    if (it == index.end())
      throw ManifestError(ManifestErrorCode::LabelMismatch, where + ": label '" + label + "' is not a known class");
    const fs::path path = fs::path(dir) / file;
    if (!fs::exists(path)) throw ManifestError(ManifestErrorCode::MissingFile, where + ": file not found");
    Tensor image;
    try {
      image = read_pnm(path.string());
    } catch (const Error& e) {
      throw ManifestError(ManifestErrorCode::ImageMismatch, where + ": " + e.what());
    }
    if (first_shape && *first_shape != image.shape())
      throw ManifestError(ManifestErrorCode::ImageMismatch,
                          where + ": image shape " + shape_str(image.shape()) + " differs from " + shape_str(*first_shape));
    first_shape = image.shape();
    out.images.push_back(LabeledImage{std::move(image), it->second, file});
  }
  return out;
}

void write_manifest(const std::string& dir, const std::vector<LabeledImage>& images,
                    const std::vector<std::string>& class_names) {
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "manifest.csv");
  if (!csv) throw FormatError("cannot write manifest in " + dir);
  csv << "filename,label\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& item = images[i];
    const std::string ext = item.image.dim(0) == 1 ? ".pgm" : ".ppm";
    std::string name = item.id.empty() ? "img" + std::to_string(i) : item.id;
    std::replace(name.begin(), name.end(), ',', '_');
    std::replace(name.begin(), name.end(), '/', '_');
    name += ext;
    write_pnm((fs::path(dir) / name).string(), item.image);
    csv << name << ',' << class_names.at(item.label) << '\n';
  }
}

}  // namespace sopt
