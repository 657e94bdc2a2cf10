#pragma once

// Subcommand bodies behind the `icethick` executable. Each returns the
// process exit code: 0 success, 1 check failure, 2 usage or input error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "icethick/gradcheck.hpp"

namespace icethick::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Overrides given on the command line; unset fields fall back to the config
// file, then to the defaults.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
};

int cmd_extract(const std::filesystem::path& masks_dir, const std::filesystem::path& out_csv,
                Streams io);

int cmd_synth(const std::optional<std::filesystem::path>& spec_json, std::size_t n_train,
              std::size_t n_test, const Overrides& flags, const std::filesystem::path& out_dir,
              Streams io);

int cmd_train(const std::filesystem::path& manifest, const std::optional<std::string>& backbone,
              const std::optional<std::filesystem::path>& config_json, const Overrides& flags,
              const std::filesystem::path& out_dir, Streams io);

// Writes eval_<split>.json into out_dir (default: the checkpoint's directory).
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
             const std::string& split, const std::optional<std::filesystem::path>& out_dir,
             Streams io);

int cmd_gradcheck(std::span<const GradCheckCase> cases, Streams io);

// Collects eval_train.json / eval_test.json files under results_dir and
// writes report.csv there.
int cmd_report(const std::filesystem::path& results_dir, Streams io);

}  // namespace icethick::cli
