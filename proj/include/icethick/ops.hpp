#pragma once

// Differentiable tensor ops. All ops allocate their result, check it for
// NaN/Inf (NumericError), and record a backward rule on the active tape when
// any input requires a gradient.

#include <cstddef>
#include <optional>
#include <span>
#include <type_traits>

#include "icethick/tensor.hpp"

namespace icethick {

inline constexpr std::size_t kNumLayers = 27;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

enum class ElementwiseKind { add, sub, mul };
enum class NormMode { train, eval };

// Running statistics of one normalization layer, shape [C] each.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  static BatchNormState identity(std::size_t channels) {
    return {Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1))};
  }
};

// a (op) b. b may equal a's shape or a trailing suffix of it (leading axes of
// a broadcast over b).
template <typename T>
Tensor<T> elementwise(ElementwiseKind kind, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElementwiseKind::add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElementwiseKind::sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElementwiseKind::mul, a, b); }

// Cross-correlation with zero padding. input [B,C,H,W], weight [O,C,Kh,Kw],
// bias [O] -> [B,O,(H+2p-Kh)/s+1,(W+2p-Kw)/s+1].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::type_identity_t<std::optional<Tensor<T>>>& bias, std::size_t stride,
                 std::size_t pad);

// Per-channel convolution. weight [C,1,Kh,Kw].
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           std::size_t stride, std::size_t pad);

// Gradient at exactly zero is zero.
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Per-channel normalization over (B,H,W). Train mode uses biased batch
// statistics and folds them into `state` with momentum 0.9 (variance stored
// unbiased); eval mode reads `state` only.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, BatchNormState<T>& state,
                      NormMode mode);

// Window maximum; padding behaves as -inf and gradients go to the first
// maximal element of each window. Requires 2*pad <= k.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride,
                    std::size_t pad);

// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// x [B,N] * weight[M,N]^T + bias [M] -> [B,M]
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs);

template <typename T>
Tensor<T> residual_add(const Tensor<T>& x, const Tensor<T>& fx);

// Mean over the batch of per-sample sum_i |p_i - t_i| / k. Subgradient is 0
// where p == t. Throws ContractError when the row width differs from
// expected_k. The target receives no gradient.
template <typename T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target,
                   std::size_t expected_k = kNumLayers);

// Sum of all elements, left to right.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

}  // namespace icethick
