#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icethick/ops.hpp"
#include "icethick/tensor.hpp"
#include "json.hpp"

namespace icethick {

enum class BackboneKind { mini_resnet, mini_densenet, mini_inception, mini_xception, mini_mobilenet };

inline constexpr BackboneKind kAllBackbones[] = {
    BackboneKind::mini_resnet, BackboneKind::mini_densenet, BackboneKind::mini_inception,
    BackboneKind::mini_xception, BackboneKind::mini_mobilenet};

std::string_view to_string(BackboneKind kind);
// Throws ConfigError listing the valid names.
BackboneKind parse_backbone(std::string_view name);
// "mini_resnet, mini_densenet, ..."
std::string backbone_names();

struct ArchitectureSpec {
  std::size_t input_height = 64;
  std::size_t input_width = 128;
  std::size_t input_channels = 1;
  std::size_t stem_channels = 16;
  std::vector<std::size_t> stage_widths{16, 32, 64};
  std::size_t blocks_per_stage = 2;
  std::size_t growth_rate = 12;  // densenet
  std::size_t expansion = 4;     // mobilenet
  std::size_t head_hidden = 1024;
  std::size_t output_nodes = kNumLayers;

  // Three stages with two stride-2 transitions.
  static constexpr std::size_t kDownsampling = 4;

  bool operator==(const ArchitectureSpec&) const = default;
};

// Throws ConfigError naming the violated constraint.
void validate(const ArchitectureSpec& spec, BackboneKind kind);

nlohmann::json to_json(const ArchitectureSpec& spec);
// Missing fields keep their defaults; unknown fields are rejected.
ArchitectureSpec architecture_from_json(const nlohmann::json& j);

// Named tensors in creation order. Names are unique.
template <typename T>
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor<T> value);
  const Tensor<T>& operator[](std::size_t i) const { return values_[i]; }
  Tensor<T>& operator[](std::size_t i) { return values_[i]; }
  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& values() { return values_; }
  const std::vector<Tensor<T>>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  // Total number of scalars.
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Type-independent layer program shared by all copies of a model.
class Network;

// Regression network: backbone -> GAP -> dense(head_hidden) -> ReLU ->
// dense(output_nodes) -> ReLU.
template <typename T>
class Model {
 public:
  // He-normal conv/dense weights, zero biases and beta, unit gamma, identity
  // running statistics; all draws from one seeded stream in creation order.
  // The output layer draws |N(0, 2/fan_in^2)| instead, so no output starts
  // dead behind the final ReLU.
  static Model build(BackboneKind kind, const ArchitectureSpec& spec, std::uint64_t seed);

  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  // batch [B, C, H, W] -> [B, output_nodes]. Train mode uses batch
  // statistics and updates the running statistics.
  Tensor<T> forward(const Tensor<T>& batch, NormMode mode);
  // Eval mode; touches no state.
  Tensor<T> predict(const Tensor<T>& batch) const;

  BackboneKind kind() const { return kind_; }
  const ArchitectureSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }
  // Running statistics, in creation order, named "<layer>.running_mean" and
  // "<layer>.running_var".
  ParameterStore<T>& norm_statistics() { return norm_; }
  const ParameterStore<T>& norm_statistics() const { return norm_; }
  void set_requires_grad(bool on);

  // Converted copy (e.g. 64-bit for gradient checks).
  template <typename U>
  Model<U> cast() const;

 private:
  template <typename>
  friend class Model;
  Model() = default;
  Tensor<T> run(const Tensor<T>& batch, NormMode mode) const;

  BackboneKind kind_ = BackboneKind::mini_resnet;
  ArchitectureSpec spec_;
  std::uint64_t seed_ = 0;
  ParameterStore<T> params_;
  ParameterStore<T> norm_;
  std::shared_ptr<const Network> net_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace icethick
