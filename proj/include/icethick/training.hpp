#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icethick/backbones.hpp"
#include "icethick/groundtruth.hpp"
#include "json.hpp"

namespace icethick {

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool shuffle = true;

  bool operator==(const TrainConfig&) const = default;
};

// ConfigError naming the violated constraint.
void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

// First and second moments per parameter, zero-initialized.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ParameterStore<float>& params);
};

// One Adam update of every parameter in store order, arithmetic in double.
// grads[i] is the gradient of params[i]; an empty vector counts as zeros.
// NumericError naming the parameter if a gradient is not finite.
void adam_step(ParameterStore<float>& params, std::span<const std::vector<float>> grads,
               AdamState& state, const TrainConfig& config);

struct LossRecord {
  struct Row {
    std::size_t epoch = 0;  // 1-based
    double train_mae_px = 0.0;
    std::optional<double> test_mae_px;
  };
  std::vector<Row> rows;

  // Header epoch,train_mae_px,test_mae_px; test left blank when absent.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Mean over samples of per-sample MAE, eval mode, samples accumulated in index
// order. ContractError for an empty dataset.
double evaluate(const Model<float>& model, const LoadedDataset& data, std::size_t batch_size = 32);

// Test MAE of always predicting the per-layer mean of the training targets.
double mean_baseline_mae(const LoadedDataset& train, const LoadedDataset& test);

struct TrainProgress {
  std::size_t epoch;
  std::size_t epochs;
  const LossRecord::Row& row;
  double mean_batch_loss;  // train-mode loss averaged over the epoch's steps
};
using ProgressFn = std::function<void(const TrainProgress&)>;

// Adam on the MAE loss for config.epochs epochs of ceil(n / batch_size)
// steps, the last batch possibly partial. The order within epoch e comes
// from Rng::substream(config.seed, "shuffle", e). Each epoch ends with an
// eval-mode pass over the training set (and eval set, if given) for the loss
// record. NumericError with epoch and step on a non-finite loss.
LossRecord train(Model<float>& model, const LoadedDataset& train_set, const TrainConfig& config,
                 const LoadedDataset* eval_set = nullptr, AdamState* adam = nullptr,
                 const ProgressFn& progress = {});

// ---- Checkpoints -------------------------------------------------------------

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr std::uint32_t kIctkVersion = 1;

// "ICTK", u32 version, u32 count, then per tensor: u32 name length, UTF-8
// name, u32 rank, u64 dims, float32 values; all little-endian.
void write_ictk(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_ictk(const std::filesystem::path& path);

// Writes <path> (ICTK: parameters, running statistics, then adam.m.<param>,
// adam.v.<param> and adam.t when adam is given) and <path>.json with
// {kind, spec, seed, format_version}.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const AdamState* adam = nullptr);

struct Checkpoint {
  Model<float> model;
  std::optional<AdamState> adam;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- Reports -----------------------------------------------------------------

struct ResultRow {
  std::string backbone;
  double train_mae_px = 0.0;
  double test_mae_px = 0.0;
};

struct Report {
  std::vector<ResultRow> rows;  // ascending test MAE, ties in input order
  std::size_t best = 0;         // index into rows
  std::string table;
  std::string csv;  // backbone,train_mae_px,test_mae_px,train_mae_cm,test_mae_cm
};

// ContractError for an empty result list.
Report report_table(std::vector<ResultRow> results,
                    double resolution_cm_per_pixel = kDefaultResolutionCmPerPixel);

}  // namespace icethick
