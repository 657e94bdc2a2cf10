#include "icethick/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "icethick/error.hpp"
#include "icethick/rng.hpp"

namespace icethick {

void validate(const SceneSpec& spec) {
  if (spec.height == 0 || spec.width == 0) throw ConfigError("scene: height and width must be >= 1");
  if (spec.num_layers < 1 || spec.num_layers > kNumLayers)
    throw ConfigError("scene: num_layers must be in 1..27");
  if (!(spec.mean_layer_thickness_px > 0.0))
    throw ConfigError("scene: mean_layer_thickness_px must be > 0");
  if (!(spec.thickness_jitter >= 0.0 && spec.thickness_jitter < 1.0))
    throw ConfigError("scene: thickness_jitter must be in [0, 1)");
  if (!(spec.undulation_amplitude_px >= 0.0))
    throw ConfigError("scene: undulation_amplitude_px must be >= 0");
  if (!(spec.undulation_wavelength_px > 0.0))
    throw ConfigError("scene: undulation_wavelength_px must be > 0");
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("scene: noise_sigma must be >= 0");
  if (!(spec.attenuation_per_row >= 0.0 && spec.attenuation_per_row < 1.0))
    throw ConfigError("scene: attenuation_per_row must be in [0, 1)");
  const double extent = static_cast<double>(spec.num_layers) * spec.mean_layer_thickness_px *
                            (1.0 + spec.thickness_jitter) +
                        spec.undulation_amplitude_px;
  if (!(extent < static_cast<double>(spec.height))) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "scene: layers do not fit: num_layers * mean_layer_thickness_px * "
                  "(1 + thickness_jitter) + undulation_amplitude_px = %g must be < height %zu",
                  extent, spec.height);
    throw ConfigError(buf);
  }
}

nlohmann::json to_json(const SceneSpec& spec) {
  return {{"height", spec.height},
          {"width", spec.width},
          {"num_layers", spec.num_layers},
          {"mean_layer_thickness_px", spec.mean_layer_thickness_px},
          {"thickness_jitter", spec.thickness_jitter},
          {"undulation_amplitude_px", spec.undulation_amplitude_px},
          {"undulation_wavelength_px", spec.undulation_wavelength_px},
          {"noise_sigma", spec.noise_sigma},
          {"attenuation_per_row", spec.attenuation_per_row}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scene: expected a JSON object");
  SceneSpec s;
  for (const auto& [key, v] : j.items()) {
    const auto size = [&](std::size_t& dst) {
      if (!v.is_number_unsigned()) throw ConfigError("scene: " + key + " must be a non-negative integer");
      dst = v.get<std::size_t>();
    };
    const auto real = [&](double& dst) {
      if (!v.is_number()) throw ConfigError("scene: " + key + " must be a number");
      dst = v.get<double>();
    };
    if (key == "height") size(s.height);
    else if (key == "width") size(s.width);
    else if (key == "num_layers") size(s.num_layers);
    else if (key == "mean_layer_thickness_px") real(s.mean_layer_thickness_px);
    else if (key == "thickness_jitter") real(s.thickness_jitter);
    else if (key == "undulation_amplitude_px") real(s.undulation_amplitude_px);
    else if (key == "undulation_wavelength_px") real(s.undulation_wavelength_px);
    else if (key == "noise_sigma") real(s.noise_sigma);
    else if (key == "attenuation_per_row") real(s.attenuation_per_row);
    else throw ConfigError("scene: unknown field '" + key + "'");
  }
  return s;
}

SyntheticSample generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  validate(spec);
  const std::size_t h = spec.height, w = spec.width, n = spec.num_layers;
  const double amp = spec.undulation_amplitude_px;
  const double hmax = static_cast<double>(h);

  Rng thickness = Rng::substream(seed, "thickness");
  std::vector<double> depth(n + 1, amp);  // b0 + cumulative thickness
  for (std::size_t i = 1; i <= n; ++i) {
    const double m = spec.mean_layer_thickness_px;
    depth[i] = depth[i - 1] + thickness.uniform(m * (1.0 - spec.thickness_jitter),
                                                m * (1.0 + spec.thickness_jitter));
  }
  Rng phase = Rng::substream(seed, "phase");
  std::vector<double> phi(n + 1);
  for (auto& p : phi) p = phase.uniform(0.0, 2.0 * std::numbers::pi);

  SyntheticSample s;
  s.seed = seed;
  s.boundaries.assign(n + 1, std::vector<double>(w));
  std::vector<std::vector<std::size_t>> rows(n + 1, std::vector<std::size_t>(w));
  const double k = 2.0 * std::numbers::pi / spec.undulation_wavelength_px;
  for (std::size_t x = 0; x < w; ++x) {
    double prev = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double b = depth[i] + amp * std::sin(k * static_cast<double>(x) + phi[i]);
      const double clamped = std::clamp(std::max(b, prev), 0.0, hmax);
      s.boundaries[i][x] = clamped;
      rows[i][x] = static_cast<std::size_t>(std::llround(clamped));
      prev = clamped;
    }
  }

  std::vector<std::uint8_t> labels(h * w, 0);
  for (std::size_t x = 0; x < w; ++x)
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t r = rows[i - 1][x]; r < rows[i][x]; ++r)
        labels[r * w + x] = static_cast<std::uint8_t>(i);
  s.mask = LayerMask(h, w, std::move(labels));
  s.target = extract_thickness(s.mask);

  // Reflectivity per label: 0 is the air above the surface, n + 1 the ice
  // below the deepest traced layer.
  Rng brightness = Rng::substream(seed, "brightness");
  std::vector<double> level(n + 2);
  level[0] = brightness.uniform(0.0, 0.1);
  for (std::size_t i = 1; i <= n; ++i)
    level[i] = i % 2 == 1 ? brightness.uniform(0.6, 0.95) : brightness.uniform(0.15, 0.4);
  level[n + 1] = brightness.uniform(0.3, 0.5);

  Rng noise = Rng::substream(seed, "noise");
  s.image = GrayImage{h, w, std::vector<float>(h * w)};
  double atten = 1.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t band = s.mask.at(r, x);
      if (band == 0 && r >= rows[n][x]) band = n + 1;
      const double v = level[band] * atten + spec.noise_sigma * noise.normal();
      s.image.values[r * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    atten *= 1.0 - spec.attenuation_per_row;
  }
  return s;
}

DatasetIndex generate_dataset(const SceneSpec& spec, std::size_t n_train, std::size_t n_test,
                              std::uint64_t base_seed, const std::filesystem::path& out_dir) {
  validate(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError(out_dir.string() + ": cannot create directory: " + ec.message());

  DatasetIndex relative;
  std::vector<ThicknessRow> rows;
  char id[32];
  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    const bool train = i < n_train;
    std::snprintf(id, sizeof id, "%s_%05zu", train ? "train" : "test", train ? i : i - n_train);
    const SyntheticSample s = generate_scene(spec, base_seed + i);
    DatasetEntry e;
    e.id = id;
    e.image = std::filesystem::path("images") / (e.id + ".pgm");
    e.mask = std::filesystem::path("masks") / (e.id + ".pgm");
    e.split = train ? Split::train : Split::test;
    e.target = s.target;
    write_image(out_dir / e.image, s.image);
    write_mask(out_dir / e.mask, s.mask);
    rows.push_back({e.id, e.target});
    relative.entries.push_back(std::move(e));
  }
  write_thickness_csv(out_dir / "thickness.csv", rows);
  write_manifest(out_dir / "manifest.json", relative);
  std::ofstream scene(out_dir / "scene.json", std::ios::binary);
  if (!scene) throw IoError((out_dir / "scene.json").string() + ": cannot write");
  scene << to_json(spec).dump(2) << "\n";

  DatasetIndex index = relative;
  for (auto& e : index.entries) {
    e.image = out_dir / e.image;
    e.mask = out_dir / e.mask;
  }
  return index;
}

}  // namespace icethick
