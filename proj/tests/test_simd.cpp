#include <cmath>
#include <vector>

#include "doctest.h"
#include "icethick/rng.hpp"
#include "icethick/simd/kernels.hpp"

using namespace icethick;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

struct GemmCase {
  std::size_t m, n, k;
  bool transposed_a;
  bool accumulate;
};

void compare_gemm(const GemmCase& gc, std::uint64_t seed) {
  const auto a = random_floats(gc.m * gc.k, seed);
  const auto b = random_floats(gc.k * gc.n, seed + 1);
  const auto c0 = random_floats(gc.m * gc.n, seed + 2);
  auto c_ref = c0;
  auto c_vec = c0;
  simd::GemmArgs<float> args{gc.m, gc.n, gc.k, a.data(), gc.transposed_a ? 1 : gc.k,
                             gc.transposed_a ? gc.m : 1, b.data(), gc.n, nullptr, gc.n,
                             gc.accumulate};
  args.c = c_ref.data();
  simd::table(simd::Isa::scalar).gemm(args);
  args.c = c_vec.data();
  simd::table(simd::Isa::avx2).gemm(args);
  for (std::size_t i = 0; i < c_ref.size(); ++i) {
    // Only FMA contraction differs; bound by K ulps of the magnitude.
    const double tol = 1e-6 * static_cast<double>(gc.k + 1);
    REQUIRE(std::abs(c_ref[i] - c_vec[i]) <= tol);
  }
}

}  // namespace

TEST_CASE("scalar gemm matches a textbook triple loop") {
  const std::size_t m = 3, n = 5, k = 4;
  const auto a = random_floats(m * k, 1);
  const auto b = random_floats(k * n, 2);
  std::vector<float> c(m * n, 0.0f);
  simd::scalar::gemm(simd::GemmArgs<float>{m, n, k, a.data(), k, 1, b.data(), n, c.data(), n, false});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double expect = 0.0;
      for (std::size_t p = 0; p < k; ++p) expect += double(a[i * k + p]) * double(b[p * n + j]);
      CHECK(c[i * n + j] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("avx2 gemm agrees with the scalar reference") {
  if (!simd::isa_supported(simd::Isa::avx2)) {
    MESSAGE("AVX2 not available; skipping");
    return;
  }
  std::uint64_t seed = 10;
  // Covers full 6x16 blocks, row tails 1..5, column tails 1..15 and both
  // operand layouts.
  for (std::size_t m : {1u, 2u, 5u, 6u, 7u, 13u}) {
    for (std::size_t n : {1u, 3u, 8u, 9u, 15u, 16u, 17u, 40u}) {
      for (std::size_t k : {1u, 4u, 27u}) {
        for (bool tr : {false, true}) {
          for (bool acc : {false, true}) {
            CAPTURE(m);
            CAPTURE(n);
            CAPTURE(k);
            compare_gemm({m, n, k, tr, acc}, seed++);
          }
        }
      }
    }
  }
}

TEST_CASE("avx2 elementwise kernels are bit-identical to scalar") {
  if (!simd::isa_supported(simd::Isa::avx2)) return;
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 33u}) {
    const auto x = random_floats(n, 100 + n);
    const auto dy = random_floats(n, 200 + n);
    const auto base = random_floats(n, 300 + n);

    auto s = base, v = base;
    simd::table(simd::Isa::scalar).accumulate(s.data(), x.data(), n);
    simd::table(simd::Isa::avx2).accumulate(v.data(), x.data(), n);
    CHECK(s == v);

    std::vector<float> rs(n), rv(n);
    simd::table(simd::Isa::scalar).relu(x.data(), rs.data(), n);
    simd::table(simd::Isa::avx2).relu(x.data(), rv.data(), n);
    CHECK(rs == rv);

    s = base;
    v = base;
    simd::table(simd::Isa::scalar).relu_backward(x.data(), dy.data(), s.data(), n);
    simd::table(simd::Isa::avx2).relu_backward(x.data(), dy.data(), v.data(), n);
    CHECK(s == v);
  }
}

TEST_CASE("relu maps negative zero to positive zero on every path") {
  const float x[9] = {-0.0f, -0.0f, -0.0f, -0.0f, -0.0f, -0.0f, -0.0f, -0.0f, -0.0f};
  float y[9];
  for (auto isa : {simd::Isa::scalar, simd::Isa::avx2}) {
    if (!simd::isa_supported(isa)) continue;
    simd::table(isa).relu(x, y, 9);
    for (float v : y) CHECK_FALSE(std::signbit(v));
  }
}

TEST_CASE("active ISA can be switched and restored") {
  const auto original = simd::active_isa();
  simd::set_active_isa(simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  simd::set_active_isa(original);
  CHECK(simd::active_isa() == original);
}
