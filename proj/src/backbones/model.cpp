#include <cmath>
#include <sstream>

#include "icethick/backbones.hpp"
#include "icethick/error.hpp"
#include "icethick/rng.hpp"
#include "network.hpp"

namespace icethick {

namespace {

constexpr std::pair<BackboneKind, std::string_view> kNames[] = {
    {BackboneKind::mini_resnet, "mini_resnet"},
    {BackboneKind::mini_densenet, "mini_densenet"},
    {BackboneKind::mini_inception, "mini_inception"},
    {BackboneKind::mini_xception, "mini_xception"},
    {BackboneKind::mini_mobilenet, "mini_mobilenet"},
};

void require_positive(std::size_t v, const char* field) {
  if (v == 0) throw ConfigError(std::string("architecture: ") + field + " must be >= 1");
}

}  // namespace

std::string_view to_string(BackboneKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

std::string backbone_names() {
  std::string out;
  for (const auto& [k, name] : kNames) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

BackboneKind parse_backbone(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw ConfigError("unknown backbone '" + std::string(name) + "' (expected one of " +
                    backbone_names() + ")");
}

void validate(const ArchitectureSpec& spec, BackboneKind kind) {
  require_positive(spec.input_height, "input_height");
  require_positive(spec.input_width, "input_width");
  require_positive(spec.input_channels, "input_channels");
  require_positive(spec.stem_channels, "stem_channels");
  require_positive(spec.blocks_per_stage, "blocks_per_stage");
  require_positive(spec.growth_rate, "growth_rate");
  require_positive(spec.expansion, "expansion");
  require_positive(spec.head_hidden, "head_hidden");
  require_positive(spec.output_nodes, "output_nodes");
  if (spec.stage_widths.size() != 3)
    throw ConfigError("architecture: stage_widths must list exactly 3 stages");
  for (const std::size_t w : spec.stage_widths) {
    require_positive(w, "stage_widths");
    if (kind == BackboneKind::mini_inception && w < 4)
      throw ConfigError("architecture: mini_inception needs stage widths >= 4 (four branches)");
  }
  const std::size_t f = ArchitectureSpec::kDownsampling;
  if (spec.input_height % f != 0 || spec.input_width % f != 0) {
    throw ConfigError("architecture: input " + std::to_string(spec.input_height) + "x" +
                      std::to_string(spec.input_width) + " is not divisible by the downsampling factor " +
                      std::to_string(f));
  }
}

nlohmann::json to_json(const ArchitectureSpec& spec) {
  return {
      {"input_height", spec.input_height},   {"input_width", spec.input_width},
      {"input_channels", spec.input_channels}, {"stem_channels", spec.stem_channels},
      {"stage_widths", spec.stage_widths},   {"blocks_per_stage", spec.blocks_per_stage},
      {"growth_rate", spec.growth_rate},     {"expansion", spec.expansion},
      {"head_hidden", spec.head_hidden},     {"output_nodes", spec.output_nodes},
  };
}

ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("architecture: expected a JSON object");
  ArchitectureSpec spec;
  const auto field = [&](const std::string& key, std::size_t& dst) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError("architecture: " + key + " must be a non-negative integer");
    dst = v.get<std::size_t>();
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "stage_widths") {
      if (!value.is_array()) throw ConfigError("architecture: stage_widths must be an array");
      spec.stage_widths.clear();
      for (const auto& w : value) {
        if (!w.is_number_unsigned()) throw ConfigError("architecture: stage_widths must hold non-negative integers");
        spec.stage_widths.push_back(w.get<std::size_t>());
      }
    } else if (key != "input_height" && key != "input_width" && key != "input_channels" &&
               key != "stem_channels" && key != "blocks_per_stage" && key != "growth_rate" &&
               key != "expansion" && key != "head_hidden" && key != "output_nodes") {
      throw ConfigError("architecture: unknown field '" + key + "'");
    }
  }
  field("input_height", spec.input_height);
  field("input_width", spec.input_width);
  field("input_channels", spec.input_channels);
  field("stem_channels", spec.stem_channels);
  field("blocks_per_stage", spec.blocks_per_stage);
  field("growth_rate", spec.growth_rate);
  field("expansion", spec.expansion);
  field("head_hidden", spec.head_hidden);
  field("output_nodes", spec.output_nodes);
  return spec;
}

template <typename T>
std::size_t ParameterStore<T>::add(std::string name, Tensor<T> value) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
  return values_[it->second];
}

template <typename T>
Tensor<T>& ParameterStore<T>::at(std::string_view name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
  return values_[it->second];
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

namespace {

template <typename T>
Tensor<T> deep_copy(const Tensor<T>& t, bool requires_grad) {
  return Tensor<T>(t.shape(), std::vector<T>(t.data().begin(), t.data().end()), requires_grad);
}

template <typename T>
ParameterStore<T> deep_copy(const ParameterStore<T>& src, bool requires_grad) {
  ParameterStore<T> out;
  for (std::size_t i = 0; i < src.size(); ++i) out.add(src.names()[i], deep_copy(src[i], requires_grad));
  return out;
}

}  // namespace

template <typename T>
Model<T> Model<T>::build(BackboneKind kind, const ArchitectureSpec& spec, std::uint64_t seed) {
  validate(spec, kind);
  NetworkBuilder b;
  b.net.input = 0;
  const Features body = build_body(b, kind, spec, b.net.input);
  int h = b.gap(body.reg);
  h = b.relu(b.dense("head.hidden", h, body.channels, spec.head_hidden));
  // Non-negative output weights over non-negative hidden units keep every
  // output unit alive at initialization, and the 1/fan_in scale keeps the
  // initial outputs near the mean hidden activation.
  h = b.relu(b.dense("head.output", h, spec.head_hidden, spec.output_nodes,
                     InitKind::positive_scaled));
  b.net.output = h;

  Model m;
  m.kind_ = kind;
  m.spec_ = spec;
  m.seed_ = seed;
  Rng rng = Rng::substream(seed, "init");
  for (const auto& d : b.params) {
    std::vector<T> values(numel(d.shape));
    switch (d.init) {
      case InitKind::he_normal:
      case InitKind::positive_scaled: {
        const double fan_in = static_cast<double>(d.fan_in);
        const double stddev = d.init == InitKind::he_normal ? std::sqrt(2.0 / fan_in)
                                                            : std::sqrt(2.0) / fan_in;
        for (auto& v : values) {
          const double draw = rng.normal(0.0, stddev);
          v = static_cast<T>(d.init == InitKind::he_normal ? draw : std::abs(draw));
        }
        break;
      }
      case InitKind::zeros: std::fill(values.begin(), values.end(), T(0)); break;
      case InitKind::ones: std::fill(values.begin(), values.end(), T(1)); break;
    }
    m.params_.add(d.name, Tensor<T>(d.shape, std::move(values), true));
  }
  for (const auto& d : b.stats) {
    m.norm_.add(d.name, Tensor<T>::full(d.shape, d.init == InitKind::ones ? T(1) : T(0)));
  }
  m.net_ = std::make_shared<const Network>(std::move(b.net));
  return m;
}

template <typename T>
Model<T>::Model(const Model& other)
    : kind_(other.kind_),
      spec_(other.spec_),
      seed_(other.seed_),
      params_(deep_copy(other.params_, true)),
      norm_(deep_copy(other.norm_, false)),
      net_(other.net_) {
  for (std::size_t i = 0; i < params_.size(); ++i)
    params_[i].node()->requires_grad = other.params_[i].requires_grad();
}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

template <typename T>
Model<T>::Model(Model&&) noexcept = default;
template <typename T>
Model<T>& Model<T>::operator=(Model&&) noexcept = default;
template <typename T>
Model<T>::~Model() = default;

template <typename T>
Tensor<T> Model<T>::run(const Tensor<T>& batch, NormMode mode) const {
  const Shape expected{spec_.input_channels, spec_.input_height, spec_.input_width};
  if (batch.rank() != 4 || batch.dim(0) == 0 ||
      !std::equal(expected.begin(), expected.end(), batch.shape().begin() + 1)) {
    throw DimensionError("model input must be [B," + std::to_string(expected[0]) + "," +
                         std::to_string(expected[1]) + "," + std::to_string(expected[2]) +
                         "], got " + to_string(batch.shape()));
  }
  return net_->run(batch, mode, params_, norm_);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, NormMode mode) {
  return run(batch, mode);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& batch) const {
  return run(batch, NormMode::eval);
}

template <typename T>
void Model<T>::set_requires_grad(bool on) {
  for (auto& p : params_.values()) p.node()->requires_grad = on;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  const auto convert = [](const ParameterStore<T>& src, bool grad) {
    ParameterStore<U> out;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto d = src[i].data();
      out.add(src.names()[i], Tensor<U>(src[i].shape(), std::vector<U>(d.begin(), d.end()),
                                        grad && src[i].requires_grad()));
    }
    return out;
  };
  Model<U> m;
  m.kind_ = kind_;
  m.spec_ = spec_;
  m.seed_ = seed_;
  m.params_ = convert(params_, true);
  m.norm_ = convert(norm_, false);
  m.net_ = net_;
  return m;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace icethick
