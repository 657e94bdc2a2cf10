#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace cli = icethick::cli;

int main(int argc, char** argv) {
  CLI::App app{"icethick: ice layer thickness regression from radar echogram masks"};
  app.require_subcommand(1);

  cli::Overrides flags;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, batch_size = 0;
  double lr = 0.0;
  std::string backbone;
  std::filesystem::path config, out, input, manifest, checkpoint;
  std::string split = "test";
  std::size_t n_train = 0, n_test = 0;

  auto* extract = app.add_subcommand("extract", "Thickness CSV from a directory of PGM masks");
  extract->add_option("masks_dir", input, "Directory of 8-bit PGM masks")->required();
  extract->add_option("--out", out, "Output CSV")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config, "Scene spec JSON");
  synth->add_option("--train", n_train, "Training samples")->required();
  synth->add_option("--test", n_test, "Test samples")->required();
  synth->add_option("--seed", seed, "Base seed");
  synth->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a backbone on a manifest");
  train->add_option("manifest", manifest, "Dataset manifest JSON")->required();
  train->add_option("--backbone", backbone, "mini_resnet, mini_densenet, mini_inception, "
                                            "mini_xception or mini_mobilenet");
  train->add_option("--config", config, "Training config JSON (or a saved run_config.json)");
  train->add_option("--seed", seed, "Seed for initialization and shuffling");
  train->add_option("--epochs", epochs, "Epochs (default 100)");
  train->add_option("--lr", lr, "Learning rate (default 0.0001)");
  train->add_option("--batch-size", batch_size, "Batch size (default 32)");
  train->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval->add_option("checkpoint", checkpoint, "Checkpoint (.ictk with .ictk.json sidecar)")->required();
  eval->add_option("manifest", manifest, "Dataset manifest JSON")->required();
  eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--out", out, "Directory for eval_<split>.json (default: checkpoint dir)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the 64-bit finite-difference suite");

  auto* report = app.add_subcommand("report", "Comparison table from eval results");
  report->add_option("results_dir", input, "Directory searched for eval_*.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : cli::kExitUsage;
  }

  const cli::Streams io{std::cout, std::cerr};
  for (auto* sub : {synth, train}) {
    if (sub->count("--seed") > 0) flags.seed = seed;
  }
  if (train->count("--epochs") > 0) flags.epochs = epochs;
  if (train->count("--lr") > 0) flags.learning_rate = lr;
  if (train->count("--batch-size") > 0) flags.batch_size = batch_size;
  const auto optional_path = [](CLI::App* sub, const char* name, const std::filesystem::path& p) {
    return sub->count(name) > 0 ? std::optional<std::filesystem::path>(p) : std::nullopt;
  };

  if (*extract) return cli::cmd_extract(input, out, io);
  if (*synth) return cli::cmd_synth(optional_path(synth, "--config", config), n_train, n_test, flags, out, io);
  if (*train) {
    const auto kind = train->count("--backbone") > 0 ? std::optional<std::string>(backbone) : std::nullopt;
    return cli::cmd_train(manifest, kind, optional_path(train, "--config", config), flags, out, io);
  }
  if (*eval) return cli::cmd_eval(checkpoint, manifest, split, optional_path(eval, "--out", out), io);
  if (*gradcheck) {
    const auto cases = icethick::builtin_gradcheck_cases();
    return cli::cmd_gradcheck(cases, io);
  }
  if (*report) return cli::cmd_report(input, io);
  return cli::kExitUsage;
}
