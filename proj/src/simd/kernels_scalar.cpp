#include "icethick/simd/kernels.hpp"

namespace icethick::simd::scalar {

template <typename T>
void gemm(const GemmArgs<T>& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    T* c = g.c + i * g.ldc;
    if (!g.accumulate) {
      for (std::size_t j = 0; j < g.n; ++j) c[j] = T(0);
    }
    // i-k-j order keeps the k sum ascending for every c[j].
    const T* arow = g.a_row_ptr(i);
    for (std::size_t kk = 0; kk < g.k; ++kk) {
      const T a = arow[kk * g.a_col];
      const T* b = g.b_row_ptr(kk);
      for (std::size_t j = 0; j < g.n; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void accumulate(T* dst, const T* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

template void gemm<float>(const GemmArgs<float>&);
template void gemm<double>(const GemmArgs<double>&);
template void accumulate<float>(float*, const float*, std::size_t);
template void accumulate<double>(double*, const double*, std::size_t);
template void relu<float>(const float*, float*, std::size_t);
template void relu<double>(const double*, double*, std::size_t);
template void relu_backward<float>(const float*, const float*, float*,
                                   std::size_t);
template void relu_backward<double>(const double*, const double*, double*,
                                    std::size_t);

}  // namespace icethick::simd::scalar
