#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "icethick/error.hpp"
#include "icethick/rng.hpp"
#include "icethick/training.hpp"

namespace icethick {

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate))
    throw ConfigError("train: learning_rate must be > 0");
  if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("train: beta1 must be in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("train: beta2 must be in [0, 1)");
  if (!(c.epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},   {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}, {"seed", c.seed},
          {"beta1", c.beta1},     {"beta2", c.beta2},
          {"epsilon", c.epsilon}, {"shuffle", c.shuffle}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    const auto count = [&](auto& dst) {
      if (!v.is_number_unsigned()) throw ConfigError("train: " + key + " must be a non-negative integer");
      dst = v.get<std::remove_reference_t<decltype(dst)>>();
    };
    const auto real = [&](double& dst) {
      if (!v.is_number()) throw ConfigError("train: " + key + " must be a number");
      dst = v.get<double>();
    };
    if (key == "epochs") count(c.epochs);
    else if (key == "learning_rate") real(c.learning_rate);
    else if (key == "batch_size") count(c.batch_size);
    else if (key == "seed") count(c.seed);
    else if (key == "beta1") real(c.beta1);
    else if (key == "beta2") real(c.beta2);
    else if (key == "epsilon") real(c.epsilon);
    else if (key == "shuffle") {
      if (!v.is_boolean()) throw ConfigError("train: shuffle must be a boolean");
      c.shuffle = v.get<bool>();
    } else {
      throw ConfigError("train: unknown field '" + key + "'");
    }
  }
  return c;
}

AdamState AdamState::zeros_like(const ParameterStore<float>& params) {
  AdamState s;
  for (const auto& p : params.values()) {
    s.m.emplace_back(p.size(), 0.0f);
    s.v.emplace_back(p.size(), 0.0f);
  }
  return s;
}

void adam_step(ParameterStore<float>& params, std::span<const std::vector<float>> grads,
               AdamState& state, const TrainConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ContractError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].empty() && grads[i].size() != params[i].size())
      throw DimensionError("adam_step: gradient of '" + params.names()[i] + "' has wrong size");
    for (const float g : grads[i])
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient for parameter '" + params.names()[i] + "'");
  }
  const std::uint64_t t = state.t + 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  std::vector<float> updated;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto theta = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    updated.assign(theta.begin(), theta.end());
    for (std::size_t k = 0; k < updated.size(); ++k) {
      const double g = grads[i].empty() ? 0.0 : grads[i][k];
      const double mk = b1 * m[k] + (1.0 - b1) * g;
      const double vk = b2 * v[k] + (1.0 - b2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double step = config.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + config.epsilon);
      updated[k] = static_cast<float>(theta[k] - step);
    }
    params[i].assign(updated);
  }
  state.t = t;
}

std::string LossRecord::to_csv() const {
  std::string out = "epoch,train_mae_px,test_mae_px\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + format_thickness(r.train_mae_px) + ",";
    if (r.test_mae_px) out += format_thickness(*r.test_mae_px);
    out += "\n";
  }
  return out;
}

void LossRecord::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << to_csv();
  if (!out) throw IoError(path.string() + ": write failed");
}

namespace {

struct Batch {
  Tensor<float> images;
  Tensor<float> targets;
};

Batch gather(const LoadedDataset& data, std::span<const std::size_t> indices) {
  const Shape& s = data.images.shape();
  const std::size_t per_image = s[1] * s[2] * s[3];
  std::vector<float> x, y;
  x.reserve(indices.size() * per_image);
  y.reserve(indices.size() * kNumLayers);
  const auto img = data.images.data();
  const auto tgt = data.targets.data();
  for (const std::size_t i : indices) {
    x.insert(x.end(), img.begin() + i * per_image, img.begin() + (i + 1) * per_image);
    y.insert(y.end(), tgt.begin() + i * kNumLayers, tgt.begin() + (i + 1) * kNumLayers);
  }
  const std::size_t b = indices.size();
  return {Tensor<float>({b, s[1], s[2], s[3]}, std::move(x)),
          Tensor<float>({b, kNumLayers}, std::move(y))};
}

}  // namespace

double evaluate(const Model<float>& model, const LoadedDataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  if (batch_size == 0) throw ContractError("evaluate: batch_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const Batch b = gather(data, std::span(order).subspan(start, end - start));
    const Tensor<float> pred = model.predict(b.images);
    if (pred.dim(1) != kNumLayers)
      throw DimensionError("evaluate: model produces " + std::to_string(pred.dim(1)) + " outputs");
    const auto p = pred.data();
    const auto t = b.targets.data();
    for (std::size_t r = 0; r < end - start; ++r) {
      double sample = 0.0;
      for (std::size_t k = 0; k < kNumLayers; ++k)
        sample += std::abs(static_cast<double>(p[r * kNumLayers + k]) - t[r * kNumLayers + k]);
      total += sample / static_cast<double>(kNumLayers);
    }
  }
  return total / static_cast<double>(data.size());
}

double mean_baseline_mae(const LoadedDataset& train, const LoadedDataset& test) {
  if (train.size() == 0 || test.size() == 0) throw ContractError("mean_baseline_mae: empty dataset");
  std::array<double, kNumLayers> mean{};
  const auto a = train.targets.data();
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t k = 0; k < kNumLayers; ++k) mean[k] += a[i * kNumLayers + k];
  for (auto& m : mean) m /= static_cast<double>(train.size());
  const auto b = test.targets.data();
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double sample = 0.0;
    for (std::size_t k = 0; k < kNumLayers; ++k) sample += std::abs(mean[k] - b[i * kNumLayers + k]);
    total += sample / static_cast<double>(kNumLayers);
  }
  return total / static_cast<double>(test.size());
}

LossRecord train(Model<float>& model, const LoadedDataset& train_set, const TrainConfig& config,
                 const LoadedDataset* eval_set, AdamState* adam, const ProgressFn& progress) {
  validate(config);
  if (train_set.size() == 0) throw ContractError("train: empty training set");
  AdamState local;
  AdamState& state = adam != nullptr ? *adam : local;
  if (state.m.empty()) state = AdamState::zeros_like(model.parameters());

  const std::size_t n = train_set.size();
  LossRecord record;
  std::vector<std::size_t> order(n);
  std::vector<std::vector<float>> grads(model.parameters().size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (config.shuffle) {
      // Fisher-Yates with the project generator; std::shuffle is not
      // portable across standard libraries.
      Rng rng = Rng::substream(config.seed, "shuffle", epoch);
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::size_t step = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++step) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const Batch b = gather(train_set, std::span(order).subspan(start, end - start));
      try {
        GradientTape<float> tape;
        Tensor<float> loss;
        {
          TapeScope<float> scope(tape);
          loss = mae_loss(model.forward(b.images, NormMode::train), b.targets);
        }
        tape.backward(loss);
        loss_sum += loss.item();
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + ": " + e.what());
      }
      auto& params = model.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        grads[i] = params[i].grad_or_zeros();
        params[i].zero_grad();
      }
      adam_step(params, grads, state, config);
    }
    LossRecord::Row row{epoch, evaluate(model, train_set), std::nullopt};
    if (eval_set != nullptr) row.test_mae_px = evaluate(model, *eval_set);
    record.rows.push_back(row);
    if (progress) {
      progress(TrainProgress{epoch, config.epochs, record.rows.back(),
                             loss_sum / static_cast<double>(step)});
    }
  }
  return record;
}

}  // namespace icethick
