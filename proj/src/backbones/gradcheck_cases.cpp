#include <cmath>

#include "icethick/backbones.hpp"
#include "icethick/gradcheck.hpp"
#include "icethick/ops.hpp"
#include "icethick/rng.hpp"

namespace icethick {

namespace {

using T64 = Tensor<double>;

constexpr double kOpThreshold = 1e-6;
constexpr double kModelThreshold = 1e-5;

T64 uniform(Shape shape, std::uint64_t seed, double lo, double hi, bool grad = true) {
  Rng rng = Rng::substream(seed, "gradcheck");
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return T64(std::move(shape), std::move(v), grad);
}

// |x| in [0.1, 1] with random sign: keeps ReLU probes off the kink.
T64 off_kink(Shape shape, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "gradcheck");
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    const double mag = rng.uniform(0.1, 1.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return T64(std::move(shape), std::move(v), true);
}

// Shuffled ladder 0.05 apart, so max windows never tie.
T64 distinct(Shape shape, std::uint64_t seed) {
  const std::size_t n = numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.05 * static_cast<double>(i) - 1.0;
  Rng rng = Rng::substream(seed, "gradcheck");
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return T64(std::move(shape), std::move(v), true);
}

// sum(y * r) with fixed random r, so every output element matters.
T64 weighted(const T64& y, std::uint64_t seed) {
  return sum(mul(y, uniform(y.shape(), seed, -1.0, 1.0, false)));
}

GradCheckCase op_case(std::string name, LossFn fn, std::vector<T64> inputs, double step = 1e-3) {
  return {name, [=] { return check_gradients(name, fn, inputs, step, kOpThreshold); }};
}

// Gradient check over every parameter of a small model in train mode.
GradCheckResult check_model(const std::string& name, Model<double> model, const T64& batch,
                            const T64& target) {
  std::vector<T64> params = model.parameters().values();
  const ParameterStore<double> stats = model.norm_statistics();
  const LossFn fn = [model, batch, target, stats](std::span<const T64> in) mutable {
    for (std::size_t i = 0; i < in.size(); ++i) model.parameters()[i] = in[i];
    // Fresh running statistics on every probe.
    for (std::size_t i = 0; i < stats.size(); ++i) {
      model.norm_statistics()[i] = T64(stats[i].shape(), {stats[i].data().begin(), stats[i].data().end()});
    }
    return mae_loss(model.forward(batch, NormMode::train), target, target.dim(1));
  };
  return check_gradients(name, fn, params, 1e-6, kModelThreshold);
}

ArchitectureSpec shrunken_spec() {
  ArchitectureSpec s;
  s.input_height = 8;
  s.input_width = 8;
  s.stem_channels = 4;
  s.stage_widths = {4, 4, 4};
  s.blocks_per_stage = 1;
  s.growth_rate = 2;
  s.expansion = 2;
  s.head_hidden = 8;
  return s;
}

}  // namespace

std::vector<GradCheckCase> builtin_gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  cases.push_back(op_case(
      "elementwise_add", [](auto in) { return weighted(add(in[0], in[1]), 1); },
      {uniform({2, 3, 4}, 2, -1, 1), uniform({3, 4}, 3, -1, 1)}));
  cases.push_back(op_case(
      "elementwise_sub", [](auto in) { return weighted(sub(in[0], in[1]), 4); },
      {uniform({2, 3, 4}, 5, -1, 1), uniform({2, 3, 4}, 6, -1, 1)}));
  cases.push_back(op_case(
      "elementwise_mul", [](auto in) { return weighted(mul(in[0], in[1]), 7); },
      {uniform({2, 3, 4}, 8, -1, 1), uniform({4}, 9, -1, 1)}));
  cases.push_back(op_case(
      "conv2d", [](auto in) { return weighted(conv2d(in[0], in[1], in[2], 1, 1), 10); },
      {uniform({2, 3, 5, 6}, 11, -1, 1), uniform({4, 3, 3, 3}, 12, -1, 1),
       uniform({4}, 13, -1, 1)}));
  cases.push_back(op_case(
      "conv2d_strided", [](auto in) { return weighted(conv2d(in[0], in[1], std::nullopt, 2, 2), 14); },
      {uniform({1, 2, 7, 6}, 15, -1, 1), uniform({3, 2, 5, 5}, 16, -1, 1)}));
  cases.push_back(op_case(
      "depthwise_conv2d",
      [](auto in) { return weighted(depthwise_conv2d(in[0], in[1], 2, 1), 17); },
      {uniform({2, 3, 6, 7}, 18, -1, 1), uniform({3, 1, 3, 3}, 19, -1, 1)}));
  cases.push_back(op_case(
      "relu", [](auto in) { return weighted(relu(in[0]), 20); }, {off_kink({2, 3, 4, 5}, 21)}));
  for (const NormMode mode : {NormMode::train, NormMode::eval}) {
    const BatchNormState<double> state{uniform({3}, 22, -0.5, 0.5, false),
                                       uniform({3}, 23, 0.5, 2.0, false)};
    cases.push_back(op_case(
        mode == NormMode::train ? "batchnorm2d_train" : "batchnorm2d_eval",
        [state, mode](auto in) {
          BatchNormState<double> s{T64(state.running_mean.shape(), {state.running_mean.data().begin(), state.running_mean.data().end()}),
                                   T64(state.running_var.shape(), {state.running_var.data().begin(), state.running_var.data().end()})};
          return weighted(batchnorm2d(in[0], in[1], in[2], s, mode), 24);
        },
        {uniform({2, 3, 3, 4}, 25, -2, 2), uniform({3}, 26, 0.5, 1.5), uniform({3}, 27, -1, 1)},
        1e-4));
  }
  cases.push_back(op_case(
      "maxpool2d", [](auto in) { return weighted(maxpool2d(in[0], 3, 2, 1), 28); },
      {distinct({2, 2, 5, 5}, 29)}));
  cases.push_back(op_case(
      "global_avg_pool", [](auto in) { return weighted(global_avg_pool(in[0]), 30); },
      {uniform({2, 3, 4, 5}, 31, -1, 1)}));
  cases.push_back(op_case(
      "dense", [](auto in) { return weighted(dense(in[0], in[1], in[2]), 32); },
      {uniform({3, 5}, 33, -1, 1), uniform({4, 5}, 34, -1, 1), uniform({4}, 35, -1, 1)}));
  cases.push_back(op_case(
      "concat_channels",
      [](auto in) {
        const std::vector<T64> xs{in[0], in[1], in[2]};
        return weighted(concat_channels<double>(xs), 36);
      },
      {uniform({2, 1, 3, 3}, 37, -1, 1), uniform({2, 2, 3, 3}, 38, -1, 1),
       uniform({2, 3, 3, 3}, 39, -1, 1)}));
  cases.push_back(op_case(
      "residual_add", [](auto in) { return weighted(residual_add(in[0], in[1]), 40); },
      {uniform({2, 3, 4, 4}, 41, -1, 1), uniform({2, 3, 4, 4}, 42, -1, 1)}));
  cases.push_back(op_case(
      "mae_loss",
      [](auto in) { return mae_loss(in[0], uniform({3, kNumLayers}, 43, 0, 1, false)); },
      {uniform({3, kNumLayers}, 44, 2, 3)}));
  cases.push_back(op_case(
      "sum", [](auto in) { return sum(mul(in[0], in[0])); }, {uniform({3, 4}, 45, -1, 1)}));

  // Small end-to-end network: conv -> BN -> ReLU -> depthwise -> pointwise ->
  // GAP -> dense(27) -> ReLU, 214 parameters.
  cases.push_back({"end_to_end_mini_network", [] {
    const T64 batch = uniform({2, 1, 6, 8}, 50, 0, 1, false);
    const T64 target = uniform({2, kNumLayers}, 51, 0, 0.2, false);
    const LossFn fn = [batch, target](std::span<const T64> p) {
      BatchNormState<double> state = BatchNormState<double>::identity(3);
      T64 h = conv2d(batch, p[0], p[1], 1, 1);
      h = relu(batchnorm2d(h, p[2], p[3], state, NormMode::train));
      h = depthwise_conv2d(h, p[4], 1, 1);
      h = conv2d(h, p[5], p[6], 1, 0);
      h = relu(dense(global_avg_pool(h), p[7], p[8]));
      return mae_loss(h, target);
    };
    // Positive output bias keeps the final ReLU active for the probe.
    return check_gradients(
        "end_to_end_mini_network", fn,
        {uniform({3, 1, 3, 3}, 52, -1, 1), uniform({3}, 53, -0.5, 0.5),
         uniform({3}, 54, 0.5, 1.5), uniform({3}, 55, -0.5, 0.5), uniform({3, 1, 3, 3}, 56, -1, 1),
         uniform({4, 3, 1, 1}, 57, -1, 1), uniform({4}, 58, -0.5, 0.5),
         uniform({kNumLayers, 4}, 59, -0.5, 0.5), uniform({kNumLayers}, 60, 1.0, 2.0)},
        1e-5, kModelThreshold);
  }});

  for (const BackboneKind kind : kAllBackbones) {
    const std::string name = "model_" + std::string(to_string(kind));
    cases.push_back({name, [kind, name] {
      const ArchitectureSpec spec = shrunken_spec();
      Model<double> model = Model<float>::build(kind, spec, 7).cast<double>();
      const T64 batch = uniform({2, 1, spec.input_height, spec.input_width}, 61, 0, 1, false);
      const T64 target = uniform({2, spec.output_nodes}, 62, 0, 0.01, false);
      return check_model(name, std::move(model), batch, target);
    }});
  }
  return cases;
}

}  // namespace icethick
