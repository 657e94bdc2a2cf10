#include <algorithm>
#include <cmath>
#include <string>

#include "icethick/ops.hpp"
#include "icethick/simd/kernels.hpp"
#include "op_support.hpp"

namespace icethick {

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, NormMode mode) {
  detail::require_rank("batchnorm2d", x.shape(), 4, "input");
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const Shape per_channel{channels};
  if (gamma.shape() != per_channel || beta.shape() != per_channel ||
      state.running_mean.shape() != per_channel || state.running_var.shape() != per_channel) {
    throw DimensionError("batchnorm2d: gamma/beta/running stats must be " +
                         to_string(per_channel) + " for input " + to_string(x.shape()));
  }
  const std::size_t count = batch * plane;
  if (mode == NormMode::train && count < 2) {
    throw ContractError("batchnorm2d: degenerate batch, train mode needs B*H*W >= 2, got " +
                        std::to_string(count));
  }
  const auto in = x.data();
  std::vector<T> mean(channels);
  std::vector<T> inv_std(channels);
  if (mode == NormMode::train) {
    std::vector<T> new_mean(channels);
    std::vector<T> new_var(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = in.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = in.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = ss / static_cast<double>(count - 1);
      new_mean[c] = static_cast<T>(kBatchNormMomentum * state.running_mean[c] +
                                   (1.0 - kBatchNormMomentum) * mu);
      new_var[c] = static_cast<T>(kBatchNormMomentum * state.running_var[c] +
                                  (1.0 - kBatchNormMomentum) * unbiased);
    }
    state.running_mean.assign(new_mean);
    state.running_var.assign(new_var);
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                                                  kBatchNormEps));
    }
  }
  std::vector<T> xhat(x.size());
  std::vector<T> out(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * plane;
      const T g = gamma[c];
      const T s = beta[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (in[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = g * h + s;
      }
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return detail::finish<T>("batchnorm2d", x.shape(), std::move(out), {&x, &gamma, &beta},
      [xn, gn, bn, mode, batch, channels, plane, count, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](TensorNode<T>& y) {
        const auto& dy = y.grad;
        std::vector<double> sum_dy(channels, 0.0);
        std::vector<double> sum_dy_xhat(channels, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy[c] += dy[base + i];
              sum_dy_xhat[c] += static_cast<double>(dy[base + i]) * xhat[base + i];
            }
          }
        }
        if (gn->requires_grad) {
          auto& gg = gn->grad_buffer();
          for (std::size_t c = 0; c < channels; ++c) gg[c] += static_cast<T>(sum_dy_xhat[c]);
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t c = 0; c < channels; ++c) gb[c] += static_cast<T>(sum_dy[c]);
        }
        if (!xn->requires_grad) return;
        auto& gx = xn->grad_buffer();
        const double n = static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            const T scale = gn->data[c] * inv_std[c];
            if (mode == NormMode::eval) {
              for (std::size_t i = 0; i < plane; ++i) gx[base + i] += scale * dy[base + i];
              continue;
            }
            const T mean_dy = static_cast<T>(sum_dy[c] / n);
            const T mean_dy_xhat = static_cast<T>(sum_dy_xhat[c] / n);
            for (std::size_t i = 0; i < plane; ++i) {
              gx[base + i] += scale * (dy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank("dense", x.shape(), 2, "input");
  detail::require_rank("dense", weight.shape(), 2, "weight");
  const std::size_t batch = x.dim(0);
  const std::size_t in = x.dim(1);
  const std::size_t out_n = weight.dim(0);
  if (weight.dim(1) != in) {
    throw DimensionError("dense: input " + to_string(x.shape()) + " and weight " +
                         to_string(weight.shape()) + " have different inner dimensions");
  }
  if (bias.shape() != Shape{out_n}) {
    throw DimensionError("dense: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  std::vector<T> wt(in * out_n);
  const auto w = weight.data();
  for (std::size_t m = 0; m < out_n; ++m)
    for (std::size_t n = 0; n < in; ++n) wt[n * out_n + m] = w[m * in + n];
  std::vector<T> out(batch * out_n);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(bias.data().begin(), bias.data().end(), out.begin() + b * out_n);
  simd::gemm(simd::GemmArgs<T>{batch, out_n, in, x.data().data(), in, 1, wt.data(), out_n,
                               out.data(), out_n, true});
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return detail::finish<T>("dense", Shape{batch, out_n}, std::move(out), {&x, &weight, &bias},
      [xn, wn, bn, batch, in, out_n](TensorNode<T>& y) {
        const T* dy = y.grad.data();
        if (xn->requires_grad) {
          // dx = dy W
          simd::gemm(simd::GemmArgs<T>{batch, in, out_n, dy, out_n, 1, wn->data.data(), in,
                                       xn->grad_buffer().data(), in, true});
        }
        if (wn->requires_grad) {
          // dW = dy^T x
          std::vector<T> dw(out_n * in, T(0));
          simd::gemm(simd::GemmArgs<T>{out_n, in, batch, dy, 1, out_n, xn->data.data(), in,
                                       dw.data(), in, true});
          simd::accumulate(wn->grad_buffer().data(), dw.data(), dw.size());
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t m = 0; m < out_n; ++m) {
            T acc = T(0);
            for (std::size_t b = 0; b < batch; ++b) acc += dy[b * out_n + m];
            gb[m] += acc;
          }
        }
      });
}

#define ICETHICK_INSTANTIATE(T)                                                            \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                 BatchNormState<T>&, NormMode);                            \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);
ICETHICK_INSTANTIATE(float)
ICETHICK_INSTANTIATE(double)
#undef ICETHICK_INSTANTIATE

}  // namespace icethick
