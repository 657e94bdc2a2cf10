#include <algorithm>
#include <cmath>
#include <string>

#include "icethick/ops.hpp"
#include "icethick/simd/kernels.hpp"
#include "op_support.hpp"

namespace icethick {
namespace {

// Number of repetitions of b inside a, or DimensionError.
std::size_t broadcast_outer(std::string_view op, const Shape& a, const Shape& b) {
  std::size_t lead = 0;
  while (lead < b.size() && b[lead] == 1) ++lead;
  const std::size_t brank = b.size() - lead;
  bool ok = brank <= a.size();
  for (std::size_t i = 0; ok && i < brank; ++i) {
    ok = a[a.size() - brank + i] == b[lead + i];
  }
  if (!ok) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " +
                         to_string(b) + " are not compatible");
  }
  return numel(a) / numel(b);
}

std::string_view kind_name(ElementwiseKind kind) {
  switch (kind) {
    case ElementwiseKind::add: return "add";
    case ElementwiseKind::sub: return "sub";
    case ElementwiseKind::mul: return "mul";
  }
  return "elementwise";
}

}  // namespace

template <typename T>
Tensor<T> elementwise(ElementwiseKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const auto op = kind_name(kind);
  const std::size_t outer = broadcast_outer(op, a.shape(), b.shape());
  const std::size_t inner = b.size();
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(a.size());
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      const T x = av[base + i];
      const T y = bv[i];
      switch (kind) {
        case ElementwiseKind::add: out[base + i] = x + y; break;
        case ElementwiseKind::sub: out[base + i] = x - y; break;
        case ElementwiseKind::mul: out[base + i] = x * y; break;
      }
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::finish<T>(op, a.shape(), std::move(out), {&a, &b},
      [an, bn, kind, outer, inner](TensorNode<T>& y) {
        const auto& g = y.grad;
        if (an->requires_grad) {
          auto& ga = an->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t idx = o * inner + i;
              ga[idx] += kind == ElementwiseKind::mul ? g[idx] * bn->data[i] : g[idx];
            }
          }
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t idx = o * inner + i;
              switch (kind) {
                case ElementwiseKind::add: gb[i] += g[idx]; break;
                case ElementwiseKind::sub: gb[i] -= g[idx]; break;
                case ElementwiseKind::mul: gb[i] += g[idx] * an->data[idx]; break;
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  simd::relu(x.data().data(), out.data(), out.size());
  auto xn = x.node();
  return detail::finish<T>("relu", x.shape(), std::move(out), {&x},
      [xn](TensorNode<T>& y) {
        simd::relu_backward(xn->data.data(), y.grad.data(), xn->grad_buffer().data(),
                            y.grad.size());
      });
}

template <typename T>
Tensor<T> residual_add(const Tensor<T>& x, const Tensor<T>& fx) {
  if (x.shape() != fx.shape()) {
    throw DimensionError("residual_add: shapes " + to_string(x.shape()) + " and " +
                         to_string(fx.shape()) + " differ");
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  simd::accumulate(out.data(), fx.data().data(), out.size());
  auto xn = x.node();
  auto fn = fx.node();
  return detail::finish<T>("residual_add", x.shape(), std::move(out), {&x, &fx},
      [xn, fn](TensorNode<T>& y) {
        if (xn->requires_grad) simd::accumulate(xn->grad_buffer().data(), y.grad.data(), y.grad.size());
        if (fn->requires_grad) simd::accumulate(fn->grad_buffer().data(), y.grad.data(), y.grad.size());
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  auto xn = x.node();
  return detail::finish<T>("sum", Shape{}, std::vector<T>{acc}, {&x},
      [xn](TensorNode<T>& y) {
        auto& g = xn->grad_buffer();
        for (auto& v : g) v += y.grad[0];
      });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs) {
  if (xs.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& first = xs[0].shape();
  detail::require_rank("concat_channels", first, 4, "input 0");
  std::size_t channels = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape& s = xs[i].shape();
    detail::require_rank("concat_channels", s, 4, "input " + std::to_string(i));
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw DimensionError("concat_channels: input " + std::to_string(i) + " shape " +
                           to_string(s) + " does not match " + to_string(first) +
                           " outside the channel axis");
    }
    channels += s[1];
  }
  const std::size_t batch = first[0];
  const std::size_t plane = first[2] * first[3];
  std::vector<T> out(batch * channels * plane);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    offsets.push_back(offset);
    const std::size_t block = x.dim(1) * plane;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* src = x.data().data() + b * block;
      std::copy(src, src + block, out.begin() + b * channels * plane + offset * plane);
    }
    offset += x.dim(1);
  }
  std::vector<typename GradientTape<T>::NodePtr> nodes;
  std::vector<const Tensor<T>*> inputs;
  for (const auto& x : xs) {
    nodes.push_back(x.node());
    inputs.push_back(&x);
  }
  return detail::finish<T>("concat_channels", Shape{batch, channels, first[2], first[3]},
      std::move(out), inputs,
      [nodes, offsets, batch, channels, plane](TensorNode<T>& y) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          auto& n = *nodes[i];
          if (!n.requires_grad) continue;
          const std::size_t block = n.shape[1] * plane;
          auto& g = n.grad_buffer();
          for (std::size_t b = 0; b < batch; ++b) {
            simd::accumulate(g.data() + b * block,
                             y.grad.data() + b * channels * plane + offsets[i] * plane, block);
          }
        }
      });
}

template <typename T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target, std::size_t expected_k) {
  detail::require_rank("mae_loss", pred.shape(), 2, "pred");
  if (pred.shape() != target.shape()) {
    throw DimensionError("mae_loss: pred " + to_string(pred.shape()) + " and target " +
                         to_string(target.shape()) + " differ");
  }
  const std::size_t batch = pred.dim(0);
  const std::size_t k = pred.dim(1);
  if (k != expected_k) {
    throw ContractError("mae_loss: expected " + std::to_string(expected_k) +
                        " outputs per sample, got " + std::to_string(k));
  }
  const auto p = pred.data();
  const auto t = target.data();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double row = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      row += std::abs(static_cast<double>(p[b * k + i]) - static_cast<double>(t[b * k + i]));
    }
    total += row / static_cast<double>(k);
  }
  const T value = static_cast<T>(total / static_cast<double>(batch));
  auto pn = pred.node();
  auto tn = target.node();
  return detail::finish<T>("mae_loss", Shape{}, std::vector<T>{value}, {&pred},
      [pn, tn, batch, k](TensorNode<T>& y) {
        auto& g = pn->grad_buffer();
        const T scale = y.grad[0] / static_cast<T>(k * batch);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T d = pn->data[i] - tn->data[i];
          if (d > T(0)) g[i] += scale;
          else if (d < T(0)) g[i] -= scale;
        }
      });
}

#define ICETHICK_INSTANTIATE(T)                                                      \
  template Tensor<T> elementwise(ElementwiseKind, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> relu(const Tensor<T>&);                                         \
  template Tensor<T> residual_add(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sum(const Tensor<T>&);                                          \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                    \
  template Tensor<T> mae_loss(const Tensor<T>&, const Tensor<T>&, std::size_t);
ICETHICK_INSTANTIATE(float)
ICETHICK_INSTANTIATE(double)
#undef ICETHICK_INSTANTIATE

}  // namespace icethick
