#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "icethick/groundtruth.hpp"
#include "json.hpp"

namespace icethick {

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 128;
  std::size_t num_layers = 12;
  double mean_layer_thickness_px = 3.0;
  double thickness_jitter = 0.3;
  double undulation_amplitude_px = 2.0;
  double undulation_wavelength_px = 64.0;
  double noise_sigma = 0.08;
  double attenuation_per_row = 0.004;

  bool operator==(const SceneSpec&) const = default;
};

// Throws ConfigError naming the violated constraint, including
// num_layers * mean * (1 + jitter) + amplitude < height.
void validate(const SceneSpec& spec);

nlohmann::json to_json(const SceneSpec& spec);
// Missing fields keep their defaults; unknown fields are rejected.
SceneSpec scene_from_json(const nlohmann::json& j);

struct SyntheticSample {
  GrayImage image;
  LayerMask mask;
  ThicknessVector target{};
  std::uint64_t seed = 0;
  // Real-valued boundary rows after clamping, before rounding:
  // boundaries[i][x] for i = 0..num_layers. Layer i spans
  // [boundaries[i-1][x], boundaries[i][x]).
  std::vector<std::vector<double>> boundaries;
};

// Deterministic in (spec, seed). Thickness, phase, brightness and noise draws
// come from separate substreams, so changing noise_sigma leaves the mask and
// target untouched.
SyntheticSample generate_scene(const SceneSpec& spec, std::uint64_t seed);

// Sample i of the training split uses seed base_seed + i, test sample j uses
// base_seed + n_train + j. Writes images/, masks/, thickness.csv,
// manifest.json and scene.json under out_dir and returns the index with
// paths under out_dir.
DatasetIndex generate_dataset(const SceneSpec& spec, std::size_t n_train, std::size_t n_test,
                              std::uint64_t base_seed, const std::filesystem::path& out_dir);

}  // namespace icethick
