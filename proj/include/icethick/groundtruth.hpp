#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icethick/ops.hpp"

namespace icethick {

inline constexpr std::uint8_t kMaxLabel = static_cast<std::uint8_t>(kNumLayers);
inline constexpr double kDefaultResolutionCmPerPixel = 4.0;

// Row-major label image. 0 is background, n is layer n counted from the top.
struct LayerMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LayerMask() = default;
  // Throws DimensionError for empty dims or a label count that does not
  // match height * width.
  LayerMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values);

  std::uint8_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
};

// Entry i-1 is the mean thickness in pixels of layer i.
using ThicknessVector = std::array<double, kNumLayers>;

// values[i-1] = count(labels == i) / width. Throws ContractError when a label
// exceeds 27.
ThicknessVector extract_thickness(const LayerMask& mask);

// Largest label present anywhere; ContractError for an empty corpus.
std::size_t max_layer_count(std::span<const LayerMask> corpus);

// ContractError for a negative thickness or non-positive resolution.
double pixels_to_cm(double thickness_px, double resolution_cm_per_pixel);

// Human-readable warnings: labels above 27, gaps in the label sequence,
// layers absent from more than half of the columns.
std::vector<std::string> validate_mask(const LayerMask& mask);

// ---- PGM (binary P5) -------------------------------------------------------

struct PgmImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint16_t maxval = 255;
  std::vector<std::uint16_t> pixels;
};

// Throws IoError naming the file on any malformed or truncated input.
PgmImage read_pgm(const std::filesystem::path& path);
// maxval <= 255 writes one byte per pixel, otherwise two (big-endian).
void write_pgm(const std::filesystem::path& path, const PgmImage& image);

LayerMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const LayerMask& mask);

// Grayscale image rescaled to [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;
};
GrayImage read_image(const std::filesystem::path& path);
// Quantized to 16 bits.
void write_image(const std::filesystem::path& path, const GrayImage& image);

// ---- Thickness tables --------------------------------------------------------

struct ThicknessRow {
  std::string id;
  ThicknessVector values{};
};

// Header id,t01,...,t27. Each value uses the fewest significant digits (at
// least 6) that read back to the same double.
std::string format_thickness(double value);
void write_thickness_csv(const std::filesystem::path& path, std::span<const ThicknessRow> rows);
std::vector<ThicknessRow> read_thickness_csv(const std::filesystem::path& path);

// ---- Datasets ----------------------------------------------------------------

enum class Split { train, test };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct DatasetEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;
  Split split = Split::train;
  ThicknessVector target{};
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  double resolution_cm_per_pixel = kDefaultResolutionCmPerPixel;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  DatasetIndex subset(Split split) const;
};

// Reads a manifest, either a JSON list of {id, image, mask, split} or an
// object {"resolution_cm_per_pixel": r, "samples": [...]}. Relative paths are
// resolved against the manifest's directory. Targets come from the masks.
// Throws IoError / ConfigError, or DimensionError when an image and its mask
// differ in size.
DatasetIndex load_manifest(const std::filesystem::path& path);
// Writes the list form (paths as given).
void write_manifest(const std::filesystem::path& path, const DatasetIndex& index);

// Images of a dataset stacked into [N,1,H,W] with targets [N,27], in entry
// order. DimensionError if the images differ in size.
struct LoadedDataset {
  Tensor<float> images;
  Tensor<float> targets;
  std::vector<std::string> ids;
  std::size_t size() const { return ids.size(); }
};
LoadedDataset load_dataset(const DatasetIndex& index);

}  // namespace icethick
