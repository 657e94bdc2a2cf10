#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "icethick/error.hpp"
#include "icethick/groundtruth.hpp"
#include "json.hpp"

namespace icethick {

std::string format_thickness(double value) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%#.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

void write_thickness_csv(const std::filesystem::path& path, std::span<const ThicknessRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << "id";
  char name[8];
  for (std::size_t i = 1; i <= kNumLayers; ++i) {
    std::snprintf(name, sizeof name, ",t%02zu", i);
    out << name;
  }
  out << "\n";
  for (const auto& row : rows) {
    if (row.id.find_first_of(",\n\"") != std::string::npos)
      throw ContractError("thickness row id '" + row.id + "' contains a CSV delimiter");
    out << row.id;
    for (const double v : row.values) out << "," << format_thickness(v);
    out << "\n";
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

std::vector<ThicknessRow> read_thickness_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,t01,", 0) != 0)
    throw IoError(path.string() + ": missing thickness header");
  std::vector<ThicknessRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != kNumLayers + 1)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 28 fields");
    ThicknessRow row;
    row.id = fields[0];
    for (std::size_t i = 0; i < kNumLayers; ++i) {
      char* end = nullptr;
      row.values[i] = std::strtod(fields[i + 1].c_str(), &end);
      if (end == fields[i + 1].c_str() || *end != '\0')
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                      fields[i + 1] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train or test)");
}

DatasetIndex DatasetIndex::subset(Split split) const {
  DatasetIndex out;
  out.resolution_cm_per_pixel = resolution_cm_per_pixel;
  for (const auto& e : entries)
    if (e.split == split) out.entries.push_back(e);
  return out;
}

DatasetIndex load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
  DatasetIndex index;
  const nlohmann::json* samples = &j;
  if (j.is_object()) {
    if (!j.contains("samples")) throw ConfigError(path.string() + ": manifest object needs 'samples'");
    samples = &j.at("samples");
    if (j.contains("resolution_cm_per_pixel")) {
      const auto& r = j.at("resolution_cm_per_pixel");
      if (!r.is_number() || !(r.get<double>() > 0.0))
        throw ConfigError(path.string() + ": resolution_cm_per_pixel must be > 0");
      index.resolution_cm_per_pixel = r.get<double>();
    }
  }
  if (!samples->is_array()) throw ConfigError(path.string() + ": manifest must be a list of samples");
  const std::filesystem::path base = path.parent_path();
  std::set<std::string> ids;
  for (const auto& s : *samples) {
    const auto text = [&](const char* key) {
      if (!s.is_object() || !s.contains(key) || !s.at(key).is_string())
        throw ConfigError(path.string() + ": sample needs string field '" + key + "'");
      return s.at(key).get<std::string>();
    };
    DatasetEntry e;
    e.id = text("id");
    if (!ids.insert(e.id).second) throw ConfigError(path.string() + ": duplicate id '" + e.id + "'");
    e.image = base / text("image");
    e.mask = base / text("mask");
    e.split = parse_split(text("split"));
    const LayerMask mask = read_mask(e.mask);
    const PgmImage image = read_pgm(e.image);
    if (image.height != mask.height || image.width != mask.width) {
      throw DimensionError(e.id + ": image is " + std::to_string(image.height) + "x" +
                           std::to_string(image.width) + " but mask is " +
                           std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
    e.target = extract_thickness(mask);
    index.entries.push_back(std::move(e));
  }
  return index;
}

void write_manifest(const std::filesystem::path& path, const DatasetIndex& index) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : index.entries) {
    j.push_back({{"id", e.id},
                 {"image", e.image.generic_string()},
                 {"mask", e.mask.generic_string()},
                 {"split", std::string(to_string(e.split))}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

LoadedDataset load_dataset(const DatasetIndex& index) {
  if (index.empty()) throw ContractError("load_dataset: empty dataset");
  LoadedDataset out;
  std::vector<float> pixels;
  std::vector<float> targets;
  std::size_t h = 0, w = 0;
  for (const auto& e : index.entries) {
    const GrayImage img = read_image(e.image);
    if (out.ids.empty()) {
      h = img.height;
      w = img.width;
    } else if (img.height != h || img.width != w) {
      throw DimensionError(e.id + ": image is " + std::to_string(img.height) + "x" +
                           std::to_string(img.width) + ", expected " + std::to_string(h) + "x" +
                           std::to_string(w));
    }
    pixels.insert(pixels.end(), img.values.begin(), img.values.end());
    for (const double t : e.target) targets.push_back(static_cast<float>(t));
    out.ids.push_back(e.id);
  }
  const std::size_t n = out.ids.size();
  out.images = Tensor<float>({n, 1, h, w}, std::move(pixels));
  out.targets = Tensor<float>({n, kNumLayers}, std::move(targets));
  return out;
}

}  // namespace icethick
