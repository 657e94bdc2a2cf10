#include <algorithm>
#include <limits>
#include <string>

#include "icethick/ops.hpp"
#include "icethick/simd/kernels.hpp"
#include "op_support.hpp"

namespace icethick {
namespace {

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry geometry(std::string_view op, const Shape& in, std::size_t kh, std::size_t kw,
                      std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ContractError(std::string(op) + ": stride must be >= 1");
  if (kh > in[2] + 2 * pad || kw > in[3] + 2 * pad) {
    throw DimensionError(std::string(op) + ": kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " larger than padded input " + to_string(in));
  }
  ConvGeometry g{in[1], in[2], in[3], kh, kw, stride, pad, 0, 0};
  g.out_h = (in[2] + 2 * pad - kh) / stride + 1;
  g.out_w = (in[3] + 2 * pad - kw) / stride + 1;
  return g;
}

// Input column (signed) for output column ow and kernel column kx.
inline long long source_index(std::size_t o, std::size_t k, const ConvGeometry& g) {
  return static_cast<long long>(o * g.stride + k) - static_cast<long long>(g.pad);
}

// col[(c*kh + y)*kw + x][oh*out_w + ow]
template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = in + c * g.height * g.width;
    for (std::size_t y = 0; y < g.kh; ++y) {
      for (std::size_t x = 0; x < g.kw; ++x) {
        T* row = col + ((c * g.kh + y) * g.kw + x) * positions;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long long ih = source_index(oh, y, g);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long long iw = source_index(ow, x, g);
            dst[ow] = (iw < 0 || iw >= static_cast<long long>(g.width))
                          ? T(0) : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Transposed layout: row[p][patch index].
template <typename T>
void im2row(const T* in, const ConvGeometry& g, T* rows) {
  const std::size_t patch = g.patch();
  for (std::size_t oh = 0; oh < g.out_h; ++oh) {
    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
      T* dst = rows + (oh * g.out_w + ow) * patch;
      for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = in + c * g.height * g.width;
        for (std::size_t y = 0; y < g.kh; ++y) {
          const long long ih = source_index(oh, y, g);
          for (std::size_t x = 0; x < g.kw; ++x) {
            const long long iw = source_index(ow, x, g);
            const bool inside = ih >= 0 && ih < static_cast<long long>(g.height) && iw >= 0 &&
                                iw < static_cast<long long>(g.width);
            *dst++ = inside ? plane[static_cast<std::size_t>(ih) * g.width +
                                    static_cast<std::size_t>(iw)]
                            : T(0);
          }
        }
      }
    }
  }
}

// in_grad += scatter(col)
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* in_grad) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = in_grad + c * g.height * g.width;
    for (std::size_t y = 0; y < g.kh; ++y) {
      for (std::size_t x = 0; x < g.kw; ++x) {
        const T* row = col + ((c * g.kh + y) * g.kw + x) * positions;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long long ih = source_index(oh, y, g);
          if (ih < 0 || ih >= static_cast<long long>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long long iw = source_index(ow, x, g);
            if (iw >= 0 && iw < static_cast<long long>(g.width)) {
              dst[static_cast<std::size_t>(iw)] += src[ow];
            }
          }
        }
      }
    }
  }
}

// Copies `planes` HxW planes into (H+2ph)x(W+2pw) planes with a zero border.
template <typename T>
void pad_planes(const T* src, std::size_t planes, std::size_t h, std::size_t w, std::size_t ph,
                std::size_t pw, T* dst) {
  const std::size_t hp = h + 2 * ph, wp = w + 2 * pw;
  std::fill(dst, dst + planes * hp * wp, T(0));
  for (std::size_t c = 0; c < planes; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* s = src + (c * h + y) * w;
      std::copy(s, s + w, dst + c * hp * wp + (y + ph) * wp + pw);
    }
  }
}

// Stride-1 convolution over already padded planes, computed on "wide" rows:
// output (y, x) lives at q = y * wp + x, so every patch element is a plain
// shifted row of the padded image and the GEMM needs no patch matrix. The
// x >= out_w columns of each wide row are discarded.
template <typename T>
struct DirectConv {
  std::size_t in_ch, hp, wp, kh, kw, out_h, out_w;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t wide() const { return (out_h - 1) * wp + out_w; }

  std::vector<const T*> rows(const T* padded) const {
    std::vector<const T*> r(patch());
    for (std::size_t c = 0; c < in_ch; ++c)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x)
          r[(c * kh + y) * kw + x] = padded + c * hp * wp + y * wp + x;
    return r;
  }

  // out[o] (+)= bias[o] + sum_k weight[o,k] * window_k
  void forward(const T* padded, const T* weight, std::size_t out_ch, const T* bias, T* out,
               bool accumulate, std::vector<T>& wide_buf) const {
    const std::size_t q = wide();
    wide_buf.assign(out_ch * q, T(0));
    if (bias) {
      for (std::size_t o = 0; o < out_ch; ++o)
        std::fill(wide_buf.begin() + o * q, wide_buf.begin() + (o + 1) * q, bias[o]);
    }
    const auto r = rows(padded);
    simd::GemmArgs<T> args{out_ch, q, patch(), weight, patch(), 1, nullptr, 0,
                           wide_buf.data(), q, true};
    args.b_rows = r.data();
    simd::gemm(args);
    for (std::size_t o = 0; o < out_ch; ++o) {
      for (std::size_t y = 0; y < out_h; ++y) {
        const T* src = wide_buf.data() + o * q + y * wp;
        T* dst = out + (o * out_h + y) * out_w;
        if (accumulate) {
          simd::accumulate(dst, src, out_w);
        } else {
          std::copy(src, src + out_w, dst);
        }
      }
    }
  }

  // dw_t[k, o] (+)= sum_q window_k[q] * dy_wide[q, o]
  void weight_grad(const T* padded, const T* dy, std::size_t out_ch, T* dw_t, bool accumulate,
                   std::vector<T>& dy_wide) const {
    const std::size_t q = wide();
    dy_wide.assign(q * out_ch, T(0));
    for (std::size_t o = 0; o < out_ch; ++o)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x)
          dy_wide[(y * wp + x) * out_ch + o] = dy[(o * out_h + y) * out_w + x];
    const auto r = rows(padded);
    simd::GemmArgs<T> args{patch(), out_ch, q, nullptr, 0, 1, dy_wide.data(), out_ch,
                           dw_t, out_ch, accumulate};
    args.a_rows = r.data();
    simd::gemm(args);
  }
};

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::type_identity_t<std::optional<Tensor<T>>>& bias, std::size_t stride,
                 std::size_t pad) {
  detail::require_rank("conv2d", input.shape(), 4, "input");
  detail::require_rank("conv2d", weight.shape(), 4, "weight");
  if (weight.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d: input " + to_string(input.shape()) + " has " +
                         std::to_string(input.dim(1)) + " channels but weight " +
                         to_string(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  const std::size_t out_ch = weight.dim(0);
  if (bias && bias->shape() != Shape{out_ch}) {
    throw DimensionError("conv2d: bias " + to_string(bias->shape()) + " does not match " +
                         std::to_string(out_ch) + " output channels");
  }
  const ConvGeometry g = geometry("conv2d", input.shape(), weight.dim(2), weight.dim(3), stride, pad);
  const std::size_t batch = input.dim(0);
  const std::size_t in_block = g.channels * g.height * g.width;
  const std::size_t out_block = out_ch * g.positions();
  // Stride-1 convolutions whose input gradient is again a padded stride-1
  // convolution take the direct path; the rest go through patch matrices.
  const bool direct = stride == 1 && pad < g.kh && pad < g.kw;
  const DirectConv<T> dc{g.channels, g.height + 2 * pad, g.width + 2 * pad, g.kh, g.kw, g.out_h, g.out_w};
  const std::size_t padded_block = g.channels * dc.hp * dc.wp;

  std::vector<T> out(batch * out_block, T(0));
  // Padded copies are kept for the weight gradient.
  std::vector<T> padded(direct && pad > 0 ? batch * padded_block : 0);
  const T* bias_ptr = bias ? bias->data().data() : nullptr;
  if (direct) {
    std::vector<T> wide;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* src = input.data().data() + b * in_block;
      if (pad > 0) {
        pad_planes(src, g.channels, g.height, g.width, pad, pad, padded.data() + b * padded_block);
        src = padded.data() + b * padded_block;
      }
      dc.forward(src, weight.data().data(), out_ch, bias_ptr, out.data() + b * out_block, false, wide);
    }
  } else {
    std::vector<T> col(g.patch() * g.positions());
    for (std::size_t b = 0; b < batch; ++b) {
      T* dst = out.data() + b * out_block;
      if (bias_ptr) {
        for (std::size_t o = 0; o < out_ch; ++o) {
          std::fill(dst + o * g.positions(), dst + (o + 1) * g.positions(), bias_ptr[o]);
        }
      }
      im2col(input.data().data() + b * in_block, g, col.data());
      simd::gemm(simd::GemmArgs<T>{out_ch, g.positions(), g.patch(), weight.data().data(),
                                   g.patch(), 1, col.data(), g.positions(), dst, g.positions(), true});
    }
  }

  auto in_n = input.node();
  auto w_n = weight.node();
  auto b_n = bias ? bias->node() : nullptr;
  std::vector<const Tensor<T>*> inputs{&input, &weight};
  if (bias) inputs.push_back(&*bias);
  return detail::finish<T>("conv2d", Shape{batch, out_ch, g.out_h, g.out_w}, std::move(out), inputs,
      [in_n, w_n, b_n, g, dc, direct, batch, out_ch, in_block, out_block, padded_block,
       padded = std::move(padded)](TensorNode<T>& y) {
        const std::size_t positions = g.positions();
        const std::size_t patch = g.patch();
        if (b_n && b_n->requires_grad) {
          auto& gb = b_n->grad_buffer();
          for (std::size_t o = 0; o < out_ch; ++o) {
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const T* dy = y.grad.data() + b * out_block + o * positions;
              for (std::size_t p = 0; p < positions; ++p) acc += dy[p];
            }
            gb[o] += static_cast<T>(acc);
          }
        }
        if (w_n->requires_grad) {
          auto& gw = w_n->grad_buffer();
          if (direct) {
            std::vector<T> dw_t(patch * out_ch, T(0));
            std::vector<T> scratch;
            for (std::size_t b = 0; b < batch; ++b) {
              const T* src = g.pad > 0 ? padded.data() + b * padded_block
                                       : in_n->data.data() + b * in_block;
              dc.weight_grad(src, y.grad.data() + b * out_block, out_ch, dw_t.data(), b > 0, scratch);
            }
            for (std::size_t o = 0; o < out_ch; ++o)
              for (std::size_t k = 0; k < patch; ++k) gw[o * patch + k] += dw_t[k * out_ch + o];
          } else {
            std::vector<T> dw(out_ch * patch, T(0));
            std::vector<T> rows(patch * positions);
            for (std::size_t b = 0; b < batch; ++b) {
              im2row(in_n->data.data() + b * in_block, g, rows.data());
              simd::gemm(simd::GemmArgs<T>{out_ch, patch, positions, y.grad.data() + b * out_block,
                                           positions, 1, rows.data(), patch, dw.data(), patch, true});
            }
            simd::accumulate(gw.data(), dw.data(), dw.size());
          }
        }
        if (in_n->requires_grad) {
          auto& gi = in_n->grad_buffer();
          if (direct) {
            // Input gradient = stride-1 convolution of the output gradient,
            // padded by k-1-pad, with the spatially flipped, channel
            // transposed kernel.
            const std::size_t ph = g.kh - 1 - g.pad, pw = g.kw - 1 - g.pad;
            std::vector<T> flipped(g.channels * out_ch * g.kh * g.kw);
            for (std::size_t o = 0; o < out_ch; ++o)
              for (std::size_t c = 0; c < g.channels; ++c)
                for (std::size_t ky = 0; ky < g.kh; ++ky)
                  for (std::size_t kx = 0; kx < g.kw; ++kx)
                    flipped[((c * out_ch + o) * g.kh + ky) * g.kw + kx] =
                        w_n->data[((o * g.channels + c) * g.kh + (g.kh - 1 - ky)) * g.kw +
                                  (g.kw - 1 - kx)];
            const DirectConv<T> back{out_ch, g.out_h + 2 * ph, g.out_w + 2 * pw, g.kh, g.kw,
                                     g.height, g.width};
            std::vector<T> dy_padded(out_ch * back.hp * back.wp);
            std::vector<T> wide;
            for (std::size_t b = 0; b < batch; ++b) {
              const T* dy = y.grad.data() + b * out_block;
              if (ph > 0 || pw > 0) {
                pad_planes(dy, out_ch, g.out_h, g.out_w, ph, pw, dy_padded.data());
                dy = dy_padded.data();
              }
              back.forward(dy, flipped.data(), g.channels, nullptr, gi.data() + b * in_block, true, wide);
            }
          } else {
            std::vector<T> dcol(patch * positions);
            for (std::size_t b = 0; b < batch; ++b) {
              simd::gemm(simd::GemmArgs<T>{patch, positions, out_ch, w_n->data.data(), 1, patch,
                                           y.grad.data() + b * out_block, positions, dcol.data(),
                                           positions, false});
              col2im(dcol.data(), g, gi.data() + b * in_block);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight, std::size_t stride,
                           std::size_t pad) {
  detail::require_rank("depthwise_conv2d", input.shape(), 4, "input");
  detail::require_rank("depthwise_conv2d", weight.shape(), 4, "weight");
  if (weight.dim(0) != input.dim(1) || weight.dim(1) != 1) {
    throw DimensionError("depthwise_conv2d: weight " + to_string(weight.shape()) +
                         " must be [C,1,Kh,Kw] with C = " + std::to_string(input.dim(1)) +
                         " from input " + to_string(input.shape()));
  }
  const ConvGeometry g =
      geometry("depthwise_conv2d", input.shape(), weight.dim(2), weight.dim(3), stride, pad);
  const std::size_t batch = input.dim(0);
  const std::size_t planes = batch * g.channels;
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.positions();
  const std::size_t taps = g.kh * g.kw;
  std::vector<T> out(planes * out_plane, T(0));
  const auto in = input.data();
  const auto w = weight.data();
  for (std::size_t pc = 0; pc < planes; ++pc) {
    const std::size_t c = pc % g.channels;
    const T* src = in.data() + pc * in_plane;
    const T* kern = w.data() + c * taps;
    T* dst = out.data() + pc * out_plane;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T acc = T(0);
        for (std::size_t y = 0; y < g.kh; ++y) {
          const long long ih = source_index(oh, y, g);
          if (ih < 0 || ih >= static_cast<long long>(g.height)) continue;
          for (std::size_t x = 0; x < g.kw; ++x) {
            const long long iw = source_index(ow, x, g);
            if (iw < 0 || iw >= static_cast<long long>(g.width)) continue;
            acc += kern[y * g.kw + x] *
                   src[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)];
          }
        }
        dst[oh * g.out_w + ow] = acc;
      }
    }
  }
  auto in_n = input.node();
  auto w_n = weight.node();
  return detail::finish<T>("depthwise_conv2d", Shape{batch, g.channels, g.out_h, g.out_w},
      std::move(out), {&input, &weight},
      [in_n, w_n, g, planes, in_plane, out_plane, taps](TensorNode<T>& y) {
        std::vector<T>* gi = in_n->requires_grad ? &in_n->grad_buffer() : nullptr;
        std::vector<T>* gw = w_n->requires_grad ? &w_n->grad_buffer() : nullptr;
        for (std::size_t pc = 0; pc < planes; ++pc) {
          const std::size_t c = pc % g.channels;
          const T* src = in_n->data.data() + pc * in_plane;
          const T* kern = w_n->data.data() + c * taps;
          const T* dy = y.grad.data() + pc * out_plane;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const T d = dy[oh * g.out_w + ow];
              for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const long long ih = source_index(oh, ky, g);
                if (ih < 0 || ih >= static_cast<long long>(g.height)) continue;
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                  const long long iw = source_index(ow, kx, g);
                  if (iw < 0 || iw >= static_cast<long long>(g.width)) continue;
                  const std::size_t at =
                      static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw);
                  if (gw) (*gw)[c * taps + ky * g.kw + kx] += d * src[at];
                  if (gi) (*gi)[pc * in_plane + at] += d * kern[ky * g.kw + kx];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
  detail::require_rank("maxpool2d", x.shape(), 4, "input");
  if (k == 0) throw ContractError("maxpool2d: window must be >= 1");
  if (2 * pad > k) {
    throw ContractError("maxpool2d: padding " + std::to_string(pad) +
                        " leaves windows entirely outside the input for k = " + std::to_string(k));
  }
  const ConvGeometry g = geometry("maxpool2d", x.shape(), k, k, stride, pad);
  const std::size_t planes = x.dim(0) * g.channels;
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.positions();
  std::vector<T> out(planes * out_plane);
  std::vector<std::size_t> argmax(out.size());
  const auto in = x.data();
  for (std::size_t pc = 0; pc < planes; ++pc) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_at = 0;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long long ih = source_index(oh, ky, g);
          if (ih < 0 || ih >= static_cast<long long>(g.height)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long long iw = source_index(ow, kx, g);
            if (iw < 0 || iw >= static_cast<long long>(g.width)) continue;
            const std::size_t at = pc * in_plane + static_cast<std::size_t>(ih) * g.width +
                                   static_cast<std::size_t>(iw);
            if (in[at] > best) {
              best = in[at];
              best_at = at;
            }
          }
        }
        out[pc * out_plane + oh * g.out_w + ow] = best;
        argmax[pc * out_plane + oh * g.out_w + ow] = best_at;
      }
    }
  }
  auto xn = x.node();
  return detail::finish<T>("maxpool2d", Shape{x.dim(0), g.channels, g.out_h, g.out_w},
      std::move(out), {&x},
      [xn, argmax = std::move(argmax)](TensorNode<T>& y) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += y.grad[i];
      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank("global_avg_pool", x.shape(), 4, "input");
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  std::vector<T> out(rows);
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += in[r * plane + i];
    out[r] = static_cast<T>(acc / static_cast<double>(plane));
  }
  auto xn = x.node();
  return detail::finish<T>("global_avg_pool", Shape{x.dim(0), x.dim(1)}, std::move(out), {&x},
      [xn, rows, plane](TensorNode<T>& y) {
        auto& gx = xn->grad_buffer();
        const T inv = T(1) / static_cast<T>(plane);
        for (std::size_t r = 0; r < rows; ++r) {
          const T g = y.grad[r] * inv;
          for (std::size_t i = 0; i < plane; ++i) gx[r * plane + i] += g;
        }
      });
}

#define ICETHICK_INSTANTIATE(T)                                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&, \
                            std::size_t, std::size_t);                                        \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t,        \
                                      std::size_t);                                           \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t);      \
  template Tensor<T> global_avg_pool(const Tensor<T>&);
ICETHICK_INSTANTIATE(float)
ICETHICK_INSTANTIATE(double)
#undef ICETHICK_INSTANTIATE

}  // namespace icethick
