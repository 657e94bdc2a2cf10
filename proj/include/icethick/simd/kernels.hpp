#pragma once

// Data-parallel inner loops used by the tensor ops. Each kernel has a portable
// scalar reference and an AVX2/FMA variant; the variant is picked once at
// startup from CPUID and can be forced with ICETHICK_SIMD=scalar|avx2.
//
// Reductions are never split across lanes: every output element accumulates
// its terms in ascending index order, so the vector and scalar paths differ
// only by FMA rounding, and each path is bit-reproducible run to run.

#include <cstddef>
#include <string_view>

namespace icethick::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// C[i,j] (+)= sum_k A[i,k] * B[k,j], k ascending.
// Row i of A starts at a_rows[i] when a_rows is set, else at a + i * a_row;
// element k of that row is at offset k * a_col. Row k of B starts at
// b_rows[k] when set, else at b + k * ldb, and is contiguous in j. C is
// row-major with unit column stride. Row tables let convolutions address
// shifted windows of a padded image without materialising patches.
template <typename T>
struct GemmArgs {
  std::size_t m = 0, n = 0, k = 0;
  const T* a = nullptr;
  std::size_t a_row = 0, a_col = 1;
  const T* b = nullptr;
  std::size_t ldb = 0;
  T* c = nullptr;
  std::size_t ldc = 0;
  bool accumulate = false;
  const T* const* a_rows = nullptr;
  const T* const* b_rows = nullptr;

  const T* a_row_ptr(std::size_t i) const { return a_rows ? a_rows[i] : a + i * a_row; }
  const T* b_row_ptr(std::size_t kk) const { return b_rows ? b_rows[kk] : b + kk * ldb; }
};

struct KernelTable {
  Isa isa;
  void (*gemm)(const GemmArgs<float>&);
  // dst[i] += src[i]
  void (*accumulate)(float* dst, const float* src, std::size_t n);
  // y[i] = max(x[i], 0)
  void (*relu)(const float* x, float* y, std::size_t n);
  // dx[i] += x[i] > 0 ? dy[i] : 0
  void (*relu_backward)(const float* x, const float* dy, float* dx,
                        std::size_t n);
};

bool isa_supported(Isa isa);
const KernelTable& table(Isa isa);
// Kernels currently in use.
const KernelTable& active();
Isa active_isa();
// Throws ConfigError if the ISA is not supported on this CPU.
void set_active_isa(Isa isa);

// Typed front ends: float goes through the active table, double always uses
// the scalar reference (64-bit mode exists for gradient checking only).
void gemm(const GemmArgs<float>& args);
void gemm(const GemmArgs<double>& args);
void accumulate(float* dst, const float* src, std::size_t n);
void accumulate(double* dst, const double* src, std::size_t n);
void relu(const float* x, float* y, std::size_t n);
void relu(const double* x, double* y, std::size_t n);
void relu_backward(const float* x, const float* dy, float* dx, std::size_t n);
void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);

namespace scalar {
template <typename T>
void gemm(const GemmArgs<T>& args);
template <typename T>
void accumulate(T* dst, const T* src, std::size_t n);
template <typename T>
void relu(const T* x, T* y, std::size_t n);
template <typename T>
void relu_backward(const T* x, const T* dy, T* dx, std::size_t n);
}  // namespace scalar

namespace avx2 {
void gemm(const GemmArgs<float>& args);
void accumulate(float* dst, const float* src, std::size_t n);
void relu(const float* x, float* y, std::size_t n);
void relu_backward(const float* x, const float* dy, float* dx, std::size_t n);
}  // namespace avx2

}  // namespace icethick::simd
