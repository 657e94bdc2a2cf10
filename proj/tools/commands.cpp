#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <vector>

#include "icethick/backbones.hpp"
#include "icethick/error.hpp"
#include "icethick/groundtruth.hpp"
#include "icethick/synthgen.hpp"
#include "icethick/training.hpp"
#include "json.hpp"

namespace icethick::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kRunConfigVersion = 1;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory: " + ec.message());
}

json run_config(std::string_view mode) {
  return {{"mode", mode}, {"format_version", kRunConfigVersion}};
}

// Maps library errors to exit codes; numeric blow-ups are check failures.
template <typename Fn>
int guarded(Streams io, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const Error& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

double mae_cm(double px, double resolution) { return pixels_to_cm(px, resolution); }

json eval_record(const Model<float>& model, Split split, std::size_t samples, double mae_px,
                 double resolution) {
  return {{"backbone", std::string(to_string(model.kind()))},
          {"split", std::string(to_string(split))},
          {"samples", samples},
          {"mae_px", mae_px},
          {"mae_cm", mae_cm(mae_px, resolution)},
          {"resolution_cm_per_pixel", resolution}};
}

}  // namespace

int cmd_extract(const fs::path& masks_dir, const fs::path& out_csv, Streams io) {
  return guarded(io, [&] {
    if (!fs::is_directory(masks_dir)) {
      io.err << "error: " << masks_dir.string() << ": not a directory\n";
      return kExitUsage;
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(masks_dir))
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) io.err << "warning: no .pgm masks in " << masks_dir.string() << "\n";

    std::vector<ThicknessRow> rows;
    std::size_t unreadable = 0;
    for (const auto& f : files) {
      try {
        const LayerMask mask = read_mask(f);
        for (const auto& w : validate_mask(mask)) io.err << "warning: " << f.string() << ": " << w << "\n";
        rows.push_back({f.stem().string(), extract_thickness(mask)});
      } catch (const Error& e) {
        io.err << "error: " << f.string() << ": " << e.what() << "\n";
        ++unreadable;
      }
    }
    if (!out_csv.parent_path().empty()) make_dir(out_csv.parent_path());
    write_thickness_csv(out_csv, rows);
    json cfg = run_config("extract");
    cfg["paths"] = {{"masks_dir", masks_dir.generic_string()}, {"out", out_csv.generic_string()}};
    write_json(out_csv.string() + ".run_config.json", cfg);
    io.out << "extracted " << rows.size() << " masks to " << out_csv.string() << "\n";
    return unreadable == 0 ? kExitOk : kExitUsage;
  });
}

int cmd_synth(const std::optional<fs::path>& spec_json, std::size_t n_train, std::size_t n_test,
              const Overrides& flags, const fs::path& out_dir, Streams io) {
  return guarded(io, [&] {
    SceneSpec spec;
    if (spec_json) {
      json j = read_json(*spec_json);
      // A saved run config carries the scene under "scene".
      if (j.is_object() && j.contains("scene")) j = j.at("scene");
      spec = scene_from_json(j);
    }
    validate(spec);
    const std::uint64_t seed = flags.seed.value_or(0);
    const DatasetIndex idx = generate_dataset(spec, n_train, n_test, seed, out_dir);
    json cfg = run_config("synth");
    cfg["seed"] = seed;
    cfg["scene"] = to_json(spec);
    cfg["n_train"] = n_train;
    cfg["n_test"] = n_test;
    cfg["paths"] = {{"out", out_dir.generic_string()}};
    write_json(out_dir / "run_config.json", cfg);
    io.out << "wrote " << idx.size() << " samples to " << (out_dir / "manifest.json").string() << "\n";
    return kExitOk;
  });
}

int cmd_train(const fs::path& manifest, const std::optional<std::string>& backbone,
              const std::optional<fs::path>& config_json, const Overrides& flags,
              const fs::path& out_dir, Streams io) {
  return guarded(io, [&] {
    TrainConfig train_cfg;
    ArchitectureSpec arch;
    std::optional<std::string> kind_name = backbone;
    std::optional<std::uint64_t> seed = flags.seed;
    if (config_json) {
      const json j = read_json(*config_json);
      if (!j.is_object()) throw ConfigError(config_json->string() + ": expected a JSON object");
      const bool run_form = j.contains("train") || j.contains("architecture") || j.contains("mode");
      if (run_form) {
        if (j.contains("train")) train_cfg = train_config_from_json(j.at("train"));
        if (j.contains("architecture")) arch = architecture_from_json(j.at("architecture"));
        if (!kind_name && j.contains("backbone")) kind_name = j.at("backbone").get<std::string>();
        if (!seed && j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
      } else {
        train_cfg = train_config_from_json(j);
        if (!seed && j.contains("seed")) seed = train_cfg.seed;
      }
    }
    const BackboneKind kind = parse_backbone(kind_name.value_or("mini_resnet"));
    if (flags.epochs) train_cfg.epochs = *flags.epochs;
    if (flags.learning_rate) train_cfg.learning_rate = *flags.learning_rate;
    if (flags.batch_size) train_cfg.batch_size = *flags.batch_size;
    train_cfg.seed = seed.value_or(0);
    validate(train_cfg);

    const DatasetIndex idx = load_manifest(manifest);
    const DatasetIndex train_idx = idx.subset(Split::train);
    const DatasetIndex test_idx = idx.subset(Split::test);
    if (train_idx.empty()) {
      io.err << "error: " << manifest.string() << ": no training samples\n";
      return kExitUsage;
    }
    const LoadedDataset train_set = load_dataset(train_idx);
    std::optional<LoadedDataset> test_set;
    if (!test_idx.empty()) test_set = load_dataset(test_idx);
    arch.input_height = train_set.images.dim(2);
    arch.input_width = train_set.images.dim(3);
    if (test_set && (test_set->images.dim(2) != arch.input_height ||
                     test_set->images.dim(3) != arch.input_width)) {
      throw DimensionError("test images differ in size from training images");
    }
    validate(arch, kind);

    make_dir(out_dir);
    json cfg = run_config("train");
    cfg["seed"] = train_cfg.seed;
    cfg["backbone"] = std::string(to_string(kind));
    cfg["train"] = to_json(train_cfg);
    cfg["architecture"] = to_json(arch);
    cfg["paths"] = {{"manifest", manifest.generic_string()}, {"out", out_dir.generic_string()}};
    write_json(out_dir / "run_config.json", cfg);

    Model<float> model = Model<float>::build(kind, arch, train_cfg.seed);
    AdamState adam;
    const LossRecord record = train(
        model, train_set, train_cfg, test_set ? &*test_set : nullptr, &adam,
        [&](const TrainProgress& p) {
          io.out << "epoch " << p.epoch << "/" << p.epochs
                 << " train_mae_px=" << format_thickness(p.row.train_mae_px);
          if (p.row.test_mae_px) io.out << " test_mae_px=" << format_thickness(*p.row.test_mae_px);
          io.out << "\n" << std::flush;
        });
    record.write_csv(out_dir / "loss.csv");
    save_checkpoint(out_dir / "model.ictk", model, &adam);

    const double res = idx.resolution_cm_per_pixel;
    const auto& last = record.rows.back();
    write_json(out_dir / "eval_train.json",
               eval_record(model, Split::train, train_set.size(), last.train_mae_px, res));
    io.out << "final train_mae_px=" << format_thickness(last.train_mae_px)
           << " train_mae_cm=" << format_thickness(mae_cm(last.train_mae_px, res)) << "\n";
    if (last.test_mae_px) {
      write_json(out_dir / "eval_test.json",
                 eval_record(model, Split::test, test_set->size(), *last.test_mae_px, res));
      io.out << "final test_mae_px=" << format_thickness(*last.test_mae_px)
             << " test_mae_cm=" << format_thickness(mae_cm(*last.test_mae_px, res)) << "\n";
    }
    return kExitOk;
  });
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const std::string& split_name,
             const std::optional<fs::path>& out_dir, Streams io) {
  return guarded(io, [&] {
    const Split split = parse_split(split_name);
    const Checkpoint ck = load_checkpoint(checkpoint);
    const DatasetIndex idx = load_manifest(manifest);
    const DatasetIndex subset = idx.subset(split);
    if (subset.empty()) {
      io.err << "error: " << manifest.string() << ": split '" << split_name << "' has no samples\n";
      return kExitUsage;
    }
    const LoadedDataset data = load_dataset(subset);
    const ArchitectureSpec& spec = ck.model.spec();
    if (data.images.dim(2) != spec.input_height || data.images.dim(3) != spec.input_width) {
      throw DimensionError("checkpoint expects " + std::to_string(spec.input_height) + "x" +
                           std::to_string(spec.input_width) + " images, manifest has " +
                           std::to_string(data.images.dim(2)) + "x" +
                           std::to_string(data.images.dim(3)));
    }
    const double mae = evaluate(ck.model, data);
    const double res = idx.resolution_cm_per_pixel;
    io.out << to_string(ck.model.kind()) << " " << split_name << " samples=" << data.size()
           << " mae_px=" << format_thickness(mae) << "\n";
    io.out << "mae_cm=" << format_thickness(mae_cm(mae, res)) << " at "
           << format_thickness(res) << " cm/px\n";
    const fs::path dir = out_dir.value_or(checkpoint.parent_path().empty() ? fs::path(".")
                                                                           : checkpoint.parent_path());
    make_dir(dir);
    json rec = eval_record(ck.model, split, data.size(), mae, res);
    rec["checkpoint"] = checkpoint.generic_string();
    write_json(dir / ("eval_" + split_name + ".json"), rec);
    json cfg = run_config("eval");
    cfg["split"] = split_name;
    cfg["paths"] = {{"checkpoint", checkpoint.generic_string()},
                    {"manifest", manifest.generic_string()},
                    {"out", dir.generic_string()}};
    write_json(dir / ("eval_" + split_name + ".run_config.json"), cfg);
    return kExitOk;
  });
}

int cmd_gradcheck(std::span<const GradCheckCase> cases, Streams io) {
  return guarded(io, [&] { return run_gradcheck_suite(cases, io.out); });
}

int cmd_report(const fs::path& results_dir, Streams io) {
  return guarded(io, [&] {
    if (!fs::is_directory(results_dir)) {
      io.err << "error: " << results_dir.string() << ": not a directory\n";
      return kExitUsage;
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(results_dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && (name == "eval_train.json" || name == "eval_test.json"))
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    struct Entry {
      std::string backbone;
      std::optional<double> train, test;
    };
    std::map<fs::path, Entry> runs;  // keyed by run directory, sorted
    double resolution = kDefaultResolutionCmPerPixel;
    for (const auto& f : files) {
      const json j = read_json(f);
      auto& run = runs[f.parent_path()];
      run.backbone = j.at("backbone").get<std::string>();
      (j.at("split").get<std::string>() == "train" ? run.train : run.test) = j.at("mae_px").get<double>();
      resolution = j.value("resolution_cm_per_pixel", resolution);
    }
    std::vector<ResultRow> rows;
    std::map<std::string, int> seen;
    for (const auto& [dir, run] : runs) {
      if (!run.train || !run.test) {
        io.err << "warning: " << dir.string() << ": needs both train and test evaluations, skipped\n";
        continue;
      }
      ++seen[run.backbone];
      rows.push_back({run.backbone, *run.train, *run.test});
    }
    if (rows.empty()) {
      io.err << "error: no complete results under " << results_dir.string() << "\n";
      return kExitUsage;
    }
    // Disambiguate repeated backbones by run directory.
    std::size_t i = 0;
    for (const auto& [dir, run] : runs) {
      if (!run.train || !run.test) continue;
      if (seen[run.backbone] > 1)
        rows[i].backbone += "@" + fs::relative(dir, results_dir).generic_string();
      ++i;
    }
    const Report report = report_table(rows, resolution);
    io.out << report.table;
    std::ofstream csv(results_dir / "report.csv", std::ios::binary);
    if (!csv) throw IoError((results_dir / "report.csv").string() + ": cannot write");
    csv << report.csv;
    json cfg = run_config("report");
    cfg["paths"] = {{"results_dir", results_dir.generic_string()}};
    write_json(results_dir / "report.run_config.json", cfg);
    return kExitOk;
  });
}

}  // namespace icethick::cli
