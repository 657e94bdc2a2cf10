#include "network.hpp"

#include "icethick/error.hpp"

namespace icethick {

int NetworkBuilder::emit(Instr instr) {
  instr.output = net.registers++;
  net.program.push_back(std::move(instr));
  return net.program.back().output;
}

int NetworkBuilder::add_param(std::string name, Shape shape, InitKind init, std::size_t fan_in) {
  params.push_back(ParamDecl{std::move(name), std::move(shape), init, fan_in});
  return static_cast<int>(params.size() - 1);
}

int NetworkBuilder::conv(const std::string& name, int x, std::size_t in_ch, std::size_t out_ch,
                         std::size_t k, std::size_t stride, std::size_t pad, bool bias) {
  Instr i{Instr::Code::conv, {x}};
  i.weight = add_param(name + ".weight", {out_ch, in_ch, k, k}, InitKind::he_normal, in_ch * k * k);
  if (bias) i.bias = add_param(name + ".bias", {out_ch}, InitKind::zeros);
  i.stride = stride;
  i.pad = pad;
  return emit(std::move(i));
}

int NetworkBuilder::depthwise(const std::string& name, int x, std::size_t ch, std::size_t k,
                              std::size_t stride, std::size_t pad) {
  Instr i{Instr::Code::depthwise, {x}};
  i.weight = add_param(name + ".weight", {ch, 1, k, k}, InitKind::he_normal, k * k);
  i.stride = stride;
  i.pad = pad;
  return emit(std::move(i));
}

int NetworkBuilder::batchnorm(const std::string& name, int x, std::size_t ch) {
  Instr i{Instr::Code::batchnorm, {x}};
  i.weight = add_param(name + ".gamma", {ch}, InitKind::ones);
  i.bias = add_param(name + ".beta", {ch}, InitKind::zeros);
  i.stats = static_cast<int>(stats.size());
  stats.push_back(ParamDecl{name + ".running_mean", {ch}, InitKind::zeros});
  stats.push_back(ParamDecl{name + ".running_var", {ch}, InitKind::ones});
  return emit(std::move(i));
}

int NetworkBuilder::relu(int x) { return emit(Instr{Instr::Code::relu, {x}}); }

int NetworkBuilder::maxpool(int x, std::size_t k, std::size_t stride, std::size_t pad) {
  Instr i{Instr::Code::maxpool, {x}};
  i.window = k;
  i.stride = stride;
  i.pad = pad;
  return emit(std::move(i));
}

int NetworkBuilder::concat(std::vector<int> xs) {
  return emit(Instr{Instr::Code::concat, std::move(xs)});
}

int NetworkBuilder::residual(int x, int fx) { return emit(Instr{Instr::Code::residual, {x, fx}}); }

int NetworkBuilder::gap(int x) { return emit(Instr{Instr::Code::gap, {x}}); }

int NetworkBuilder::dense(const std::string& name, int x, std::size_t in, std::size_t out,
                          InitKind init) {
  Instr i{Instr::Code::dense, {x}};
  i.weight = add_param(name + ".weight", {out, in}, init, in);
  i.bias = add_param(name + ".bias", {out}, InitKind::zeros);
  return emit(std::move(i));
}

int NetworkBuilder::conv_bn_relu(const std::string& name, int x, std::size_t in_ch,
                                 std::size_t out_ch, std::size_t k, std::size_t stride,
                                 std::size_t pad) {
  const int c = conv(name + ".conv", x, in_ch, out_ch, k, stride, pad, false);
  return relu(batchnorm(name + ".bn", c, out_ch));
}

template <typename T>
Tensor<T> Network::run(const Tensor<T>& x, NormMode mode, const ParameterStore<T>& params,
                       const ParameterStore<T>& norm) const {
  std::vector<Tensor<T>> reg(static_cast<std::size_t>(registers));
  // Last instruction reading each register, so eval passes can free early.
  std::vector<std::size_t> last_use(reg.size(), 0);
  for (std::size_t pc = 0; pc < program.size(); ++pc)
    for (const int in : program[pc].inputs) last_use[static_cast<std::size_t>(in)] = pc;

  reg[static_cast<std::size_t>(input)] = x;
  for (std::size_t pc = 0; pc < program.size(); ++pc) {
    const Instr& i = program[pc];
    const auto arg = [&](std::size_t n) -> const Tensor<T>& {
      return reg[static_cast<std::size_t>(i.inputs[n])];
    };
    const auto param = [&](int idx) -> const Tensor<T>& {
      return params[static_cast<std::size_t>(idx)];
    };
    Tensor<T> y;
    switch (i.code) {
      case Instr::Code::conv:
        y = conv2d(arg(0), param(i.weight),
                   i.bias >= 0 ? std::optional<Tensor<T>>(param(i.bias)) : std::nullopt, i.stride,
                   i.pad);
        break;
      case Instr::Code::depthwise:
        y = depthwise_conv2d(arg(0), param(i.weight), i.stride, i.pad);
        break;
      case Instr::Code::batchnorm: {
        const auto s = static_cast<std::size_t>(i.stats);
        // Handles share storage with the store, so train mode updates it.
        BatchNormState<T> state{norm[s], norm[s + 1]};
        y = batchnorm2d(arg(0), param(i.weight), param(i.bias), state, mode);
        break;
      }
      case Instr::Code::relu: y = relu(arg(0)); break;
      case Instr::Code::maxpool: y = maxpool2d(arg(0), i.window, i.stride, i.pad); break;
      case Instr::Code::concat: {
        std::vector<Tensor<T>> xs;
        for (std::size_t n = 0; n < i.inputs.size(); ++n) xs.push_back(arg(n));
        y = concat_channels<T>(xs);
        break;
      }
      case Instr::Code::residual: y = residual_add(arg(0), arg(1)); break;
      case Instr::Code::gap: y = global_avg_pool(arg(0)); break;
      case Instr::Code::dense: y = dense(arg(0), param(i.weight), param(i.bias)); break;
    }
    reg[static_cast<std::size_t>(i.output)] = std::move(y);
    if (GradientTape<T>::active() == nullptr) {
      for (const int in : i.inputs) {
        if (last_use[static_cast<std::size_t>(in)] == pc && in != output) {
          reg[static_cast<std::size_t>(in)] = Tensor<T>();
        }
      }
    }
  }
  return reg[static_cast<std::size_t>(output)];
}

template Tensor<float> Network::run(const Tensor<float>&, NormMode, const ParameterStore<float>&,
                                    const ParameterStore<float>&) const;
template Tensor<double> Network::run(const Tensor<double>&, NormMode, const ParameterStore<double>&,
                                     const ParameterStore<double>&) const;

}  // namespace icethick
