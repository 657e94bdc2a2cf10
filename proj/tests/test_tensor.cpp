#include <vector>

#include "doctest.h"
#include "icethick/error.hpp"
#include "icethick/ops.hpp"
#include "icethick/rng.hpp"
#include "icethick/tensor.hpp"

using namespace icethick;

TEST_CASE("splitmix64 stream matches the reference sequence for seed 0") {
  Rng rng(0);
  CHECK(rng.next_u64() == 0xe220a8397b1dcdafULL);
  CHECK(rng.next_u64() == 0x6e789e6aa1b965f4ULL);
  CHECK(rng.next_u64() == 0x06c45d188009454fULL);
}

TEST_CASE("same seed gives the same normal and uniform draws") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
    CHECK(a.below(17) == b.below(17));
  }
  auto s1 = Rng::substream(5, "noise");
  auto s2 = Rng::substream(5, "phase");
  CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("tensor construction validates shape against data") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({0, 3}, std::vector<float>{}), DimensionError);
  const auto s = Tensor<double>::scalar(2.5);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 2.5);
}

TEST_CASE("loss = sum(w) gives ones") {
  auto w = Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto loss = sum(w);
    backward(loss, tape);
  }
  CHECK(w.grad_or_zeros() == std::vector<double>(6, 1.0));
}

TEST_CASE("two consumers of one tensor sum their gradients") {
  auto x = Tensor<double>({3}, {1, -2, 3}, true);
  GradientTape<double> tape;
  TapeScope<double> scope(tape);
  // loss = sum(x * x) + sum(x) -> 2x + 1
  auto loss = add(sum(mul(x, x)), sum(x));
  tape.backward(loss);
  CHECK(x.grad_or_zeros() == std::vector<double>{3, -3, 7});
}

TEST_CASE("backward replays each recorded op once and skips unreachable ones") {
  auto a = Tensor<double>({2}, {1, 2}, true);
  auto b = Tensor<double>({2}, {3, 4}, true);
  GradientTape<double> tape;
  TapeScope<double> scope(tape);
  auto used = sum(mul(a, a));
  auto unused = sum(b);
  tape.backward(used);
  CHECK(tape.size() == 3);
  CHECK(tape.replayed() == 2);
  CHECK(b.grad().empty());
  CHECK(b.grad_or_zeros() == std::vector<double>{0, 0});
  (void)unused;
}

TEST_CASE("non-scalar or unrecorded losses are rejected") {
  auto x = Tensor<double>({2}, {1, 2}, true);
  GradientTape<double> tape;
  TapeScope<double> scope(tape);
  auto y = relu(x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  GradientTape<double> other;
  auto loss = sum(x);
  CHECK_THROWS_AS(other.backward(loss), ContractError);
}

TEST_CASE("no tape means nothing is recorded") {
  auto x = Tensor<float>({2}, {1, 2}, true);
  auto y = relu(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("ops do not modify their inputs, forward or backward") {
  auto x = Tensor<double>({1, 2, 3, 3}, std::vector<double>(18, 0.5), true);
  for (std::size_t i = 0; i < 18; ++i) {
    std::vector<double> v(x.data().begin(), x.data().end());
    v[i] = 0.1 * static_cast<double>(i) - 0.7;
    x.assign(v);
  }
  auto w = Tensor<double>({2, 2, 3, 3}, std::vector<double>(36, 0.25), true);
  const std::vector<double> x_before(x.data().begin(), x.data().end());
  const std::vector<double> w_before(w.data().begin(), w.data().end());
  GradientTape<double> tape;
  TapeScope<double> scope(tape);
  auto y = conv2d(relu(x), w, std::nullopt, 1, 1);
  tape.backward(sum(y));
  CHECK(std::vector<double>(x.data().begin(), x.data().end()) == x_before);
  CHECK(std::vector<double>(w.data().begin(), w.data().end()) == w_before);
}

TEST_CASE("non-finite results raise NumericError") {
  const float big = 3e38f;
  auto a = Tensor<float>({1}, {big});
  CHECK_THROWS_AS(add(a, a), NumericError);
}
