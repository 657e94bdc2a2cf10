#include <atomic>
#include <cstdlib>
#include <string>

#include "icethick/error.hpp"
#include "icethick/simd/kernels.hpp"

namespace icethick::simd {
namespace {

const KernelTable kScalar{Isa::scalar, &scalar::gemm<float>,
                          &scalar::accumulate<float>, &scalar::relu<float>,
                          &scalar::relu_backward<float>};
const KernelTable kAvx2{Isa::avx2, &avx2::gemm, &avx2::accumulate, &avx2::relu,
                        &avx2::relu_backward};

Isa detect() {
  if (const char* env = std::getenv("ICETHICK_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table_ptr{&table(detect())};
  return table_ptr;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  return isa == Isa::avx2 ? kAvx2 : kScalar;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) +
                      "' is not supported on this CPU");
  }
  current().store(&table(isa), std::memory_order_relaxed);
}

void gemm(const GemmArgs<float>& args) { active().gemm(args); }
void gemm(const GemmArgs<double>& args) { scalar::gemm(args); }
void accumulate(float* dst, const float* src, std::size_t n) {
  active().accumulate(dst, src, n);
}
void accumulate(double* dst, const double* src, std::size_t n) {
  scalar::accumulate(dst, src, n);
}
void relu(const float* x, float* y, std::size_t n) { active().relu(x, y, n); }
void relu(const double* x, double* y, std::size_t n) { scalar::relu(x, y, n); }
void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  active().relu_backward(x, dy, dx, n);
}
void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  scalar::relu_backward(x, dy, dx, n);
}

}  // namespace icethick::simd
