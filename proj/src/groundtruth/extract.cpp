#include <algorithm>
#include <string>

#include "icethick/error.hpp"
#include "icethick/groundtruth.hpp"

namespace icethick {

LayerMask::LayerMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values)
    : height(h), width(w), labels(std::move(values)) {
  if (h == 0 || w == 0) throw DimensionError("mask dimensions must be positive");
  if (labels.size() != h * w) {
    throw DimensionError("mask has " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
}

ThicknessVector extract_thickness(const LayerMask& mask) {
  if (mask.width == 0) throw ContractError("extract_thickness: mask has zero width");
  std::array<std::size_t, kNumLayers + 1> counts{};
  for (const std::uint8_t v : mask.labels) {
    if (v > kMaxLabel) {
      throw ContractError("extract_thickness: label " + std::to_string(v) + " exceeds " +
                          std::to_string(kNumLayers));
    }
    ++counts[v];
  }
  ThicknessVector out{};
  const double w = static_cast<double>(mask.width);
  for (std::size_t i = 1; i <= kNumLayers; ++i) out[i - 1] = static_cast<double>(counts[i]) / w;
  return out;
}

std::size_t max_layer_count(std::span<const LayerMask> corpus) {
  if (corpus.empty()) throw ContractError("max_layer_count: empty corpus");
  std::uint8_t best = 0;
  for (const auto& m : corpus)
    for (const std::uint8_t v : m.labels) best = std::max(best, v);
  return best;
}

double pixels_to_cm(double thickness_px, double resolution_cm_per_pixel) {
  if (!(thickness_px >= 0.0)) throw ContractError("pixels_to_cm: thickness must be >= 0");
  if (!(resolution_cm_per_pixel > 0.0)) throw ContractError("pixels_to_cm: resolution must be > 0");
  return thickness_px * resolution_cm_per_pixel;
}

std::vector<std::string> validate_mask(const LayerMask& mask) {
  std::vector<std::string> warnings;
  std::array<std::size_t, 256> counts{};
  // Columns in which each label appears at least once.
  std::array<std::size_t, 256> columns{};
  std::vector<bool> seen(256);
  for (std::size_t c = 0; c < mask.width; ++c) {
    std::fill(seen.begin(), seen.end(), false);
    for (std::size_t r = 0; r < mask.height; ++r) {
      const std::uint8_t v = mask.at(r, c);
      ++counts[v];
      if (!seen[v]) {
        seen[v] = true;
        ++columns[v];
      }
    }
  }
  for (std::size_t v = kMaxLabel + 1; v < counts.size(); ++v) {
    if (counts[v] > 0) {
      warnings.push_back("label " + std::to_string(v) + " exceeds " + std::to_string(kNumLayers) +
                         " (" + std::to_string(counts[v]) + " pixels)");
    }
  }
  std::size_t top = 0;
  for (std::size_t v = 1; v <= kMaxLabel; ++v)
    if (counts[v] > 0) top = v;
  for (std::size_t v = 1; v < top; ++v) {
    if (counts[v] == 0) {
      warnings.push_back("non-contiguous labels: layer " + std::to_string(v) +
                         " missing below layer " + std::to_string(top));
    }
  }
  for (std::size_t v = 1; v <= kMaxLabel; ++v) {
    if (counts[v] > 0 && 2 * columns[v] < mask.width) {
      warnings.push_back("sparse layer " + std::to_string(v) + ": present in " +
                         std::to_string(columns[v]) + " of " + std::to_string(mask.width) +
                         " columns");
    }
  }
  return warnings;
}

}  // namespace icethick
