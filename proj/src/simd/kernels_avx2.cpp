// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// CPUID check, and kept free of inline library templates so no AVX2 code can
// leak into scalar translation units through ODR merging.

#include <immintrin.h>

#include "icethick/simd/kernels.hpp"

namespace icethick::simd::avx2 {
namespace {

constexpr int kMaxRows = 6;
constexpr std::size_t kStrip = 16;
constexpr std::size_t kDepth = 256;

inline std::size_t min_size(std::size_t a, std::size_t b) { return a < b ? a : b; }

inline __m256i tail_mask(std::size_t r) {
  alignas(32) static const int lanes[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                            0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(lanes + 8 - r));
}

// Copies B[k0:k0+depth, j0:j0+width] into a dense depth x 16 panel, zero
// padded on the right.
void pack_strip(const GemmArgs<float>& g, std::size_t k0, std::size_t depth, std::size_t j0,
                std::size_t width, float* panel) {
  for (std::size_t kk = 0; kk < depth; ++kk) {
    const float* src = g.b_row_ptr(k0 + kk) + j0;
    float* dst = panel + kk * kStrip;
    if (width == kStrip) {
      _mm256_store_ps(dst, _mm256_loadu_ps(src));
      _mm256_store_ps(dst + 8, _mm256_loadu_ps(src + 8));
    } else {
      for (std::size_t j = 0; j < kStrip; ++j) dst[j] = j < width ? src[j] : 0.0f;
    }
  }
}

// MR x 16 block of C over one packed depth slice. `fresh` starts from zero
// instead of C. Only the first `width` columns are stored.
template <int MR>
void block(const GemmArgs<float>& g, const float* panel, std::size_t i0, std::size_t j0,
           std::size_t k0, std::size_t depth, std::size_t width, bool fresh) {
  __m256 acc[MR][2];
  const bool full = width == kStrip;
  const __m256i mask_lo = tail_mask(min_size(width, 8));
  const __m256i mask_hi = tail_mask(width > 8 ? width - 8 : 0);
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) {
    const float* c = g.c + (i0 + r) * g.ldc + j0;
    if (fresh) {
      acc[r][0] = _mm256_setzero_ps();
      acc[r][1] = _mm256_setzero_ps();
    } else if (full) {
      acc[r][0] = _mm256_loadu_ps(c);
      acc[r][1] = _mm256_loadu_ps(c + 8);
    } else {
      acc[r][0] = _mm256_maskload_ps(c, mask_lo);
      acc[r][1] = width > 8 ? _mm256_maskload_ps(c + 8, mask_hi) : _mm256_setzero_ps();
    }
  }
  const float* a[MR];
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) a[r] = g.a_row_ptr(i0 + r) + k0 * g.a_col;
  const std::size_t step = g.a_col;
  for (std::size_t kk = 0; kk < depth; ++kk) {
    const __m256 b0 = _mm256_load_ps(panel + kk * kStrip);
    const __m256 b1 = _mm256_load_ps(panel + kk * kStrip + 8);
#pragma GCC unroll 6
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(a[r] + kk * step);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) {
    float* c = g.c + (i0 + r) * g.ldc + j0;
    if (full) {
      _mm256_storeu_ps(c, acc[r][0]);
      _mm256_storeu_ps(c + 8, acc[r][1]);
    } else {
      _mm256_maskstore_ps(c, mask_lo, acc[r][0]);
      if (width > 8) _mm256_maskstore_ps(c + 8, mask_hi, acc[r][1]);
    }
  }
}

void row_blocks(const GemmArgs<float>& g, const float* panel, std::size_t j0, std::size_t k0,
                std::size_t depth, std::size_t width, bool fresh) {
  std::size_t i0 = 0;
  for (; i0 + kMaxRows <= g.m; i0 += kMaxRows) {
    block<kMaxRows>(g, panel, i0, j0, k0, depth, width, fresh);
  }
  switch (g.m - i0) {
    case 5: block<5>(g, panel, i0, j0, k0, depth, width, fresh); break;
    case 4: block<4>(g, panel, i0, j0, k0, depth, width, fresh); break;
    case 3: block<3>(g, panel, i0, j0, k0, depth, width, fresh); break;
    case 2: block<2>(g, panel, i0, j0, k0, depth, width, fresh); break;
    case 1: block<1>(g, panel, i0, j0, k0, depth, width, fresh); break;
    default: break;
  }
}

}  // namespace

// Column strips of 16, depth slices of 256 processed in ascending order, so
// each C element still sums its k terms strictly left to right.
void gemm(const GemmArgs<float>& g) {
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    if (!g.accumulate) {
      for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = 0; j < g.n; ++j) g.c[i * g.ldc + j] = 0.0f;
    }
    return;
  }
  alignas(32) static thread_local float panel[kDepth * kStrip];
  for (std::size_t j0 = 0; j0 < g.n; j0 += kStrip) {
    const std::size_t width = min_size(kStrip, g.n - j0);
    for (std::size_t k0 = 0; k0 < g.k; k0 += kDepth) {
      const std::size_t depth = min_size(kDepth, g.k - k0);
      pack_strip(g, k0, depth, j0, width, panel);
      row_blocks(g, panel, j0, k0, depth, width, k0 == 0 && !g.accumulate);
    }
  }
}

void accumulate(float* dst, const float* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(dst + i,
                     _mm256_add_ps(_mm256_loadu_ps(dst + i), _mm256_loadu_ps(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

void relu(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // max_ps returns the second operand when the first is NaN or both are
    // zero, so ordering matters for -0.0 to map to +0.0 like the scalar path.
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 keep = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_and_ps(v, keep));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 keep = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(_mm256_loadu_ps(dy + i), keep);
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += dy[i];
  }
}

}  // namespace icethick::simd::avx2
