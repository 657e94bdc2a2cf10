#pragma once

// Internal: a model body is a straight-line program over tensor registers.
// Builders emit instructions and parameter declarations; Model<T> runs the
// program for either precision.

#include <cstddef>
#include <string>
#include <vector>

#include "icethick/backbones.hpp"

namespace icethick {

// he_normal: N(0, 2/fan_in). positive_scaled: |N(0, 2/fan_in^2)|.
enum class InitKind { he_normal, positive_scaled, zeros, ones };

struct ParamDecl {
  std::string name;
  Shape shape;
  InitKind init;
  std::size_t fan_in = 1;
};

struct Instr {
  enum class Code { conv, depthwise, batchnorm, relu, maxpool, concat, residual, gap, dense };
  Code code;
  std::vector<int> inputs;
  int output = -1;
  int weight = -1;  // conv/depthwise/dense weight, batchnorm gamma
  int bias = -1;    // conv/dense bias, batchnorm beta
  int stats = -1;   // batchnorm running_mean index; running_var follows
  std::size_t stride = 1, pad = 0, window = 1;
};

class Network {
 public:
  std::vector<Instr> program;
  int input = 0;
  int output = 0;
  int registers = 1;

  template <typename T>
  Tensor<T> run(const Tensor<T>& x, NormMode mode, const ParameterStore<T>& params,
                const ParameterStore<T>& norm) const;
};

// Records the layer program and parameter declarations for one family.
class NetworkBuilder {
 public:
  std::vector<ParamDecl> params;
  std::vector<ParamDecl> stats;  // running_mean, running_var pairs
  Network net;

  int conv(const std::string& name, int x, std::size_t in_ch, std::size_t out_ch, std::size_t k,
           std::size_t stride, std::size_t pad, bool bias);
  int depthwise(const std::string& name, int x, std::size_t ch, std::size_t k, std::size_t stride,
                std::size_t pad);
  int batchnorm(const std::string& name, int x, std::size_t ch);
  int relu(int x);
  int maxpool(int x, std::size_t k, std::size_t stride, std::size_t pad);
  int concat(std::vector<int> xs);
  int residual(int x, int fx);
  int gap(int x);
  int dense(const std::string& name, int x, std::size_t in, std::size_t out,
            InitKind init = InitKind::he_normal);

  // conv -> BN -> ReLU, conv without bias.
  int conv_bn_relu(const std::string& name, int x, std::size_t in_ch, std::size_t out_ch,
                   std::size_t k, std::size_t stride, std::size_t pad);

 private:
  int emit(Instr instr);
  int add_param(std::string name, Shape shape, InitKind init, std::size_t fan_in = 1);
};

// Body of each family; returns the feature register and its channel count.
struct Features {
  int reg;
  std::size_t channels;
};
Features build_body(NetworkBuilder& b, BackboneKind kind, const ArchitectureSpec& spec, int input);

}  // namespace icethick
