#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "icethick/error.hpp"
#include "icethick/tensor.hpp"

namespace icethick::detail {

template <typename T>
void check_finite(std::string_view op, const std::vector<T>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + " produced a non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

// Builds the op result and records `backward` when a tape is active and any
// input requires grad.
template <typename T>
Tensor<T> finish(std::string_view op, Shape shape, std::vector<T> data,
                 const std::vector<const Tensor<T>*>& inputs,
                 typename GradientTape<T>::BackwardFn backward) {
  check_finite(op, data);
  Tensor<T> out(std::move(shape), std::move(data));
  auto* tape = GradientTape<T>::active();
  if (tape == nullptr) return out;
  std::vector<typename GradientTape<T>::NodePtr> nodes;
  bool any = false;
  for (const auto* in : inputs) {
    nodes.push_back(in->node());
    any = any || in->requires_grad();
  }
  if (!any) return out;
  out.node()->requires_grad = true;
  tape->record(op, std::move(nodes), out.node(), std::move(backward));
  return out;
}

template <typename T>
Tensor<T> finish(std::string_view op, Shape shape, std::vector<T> data,
                 std::initializer_list<const Tensor<T>*> inputs,
                 typename GradientTape<T>::BackwardFn backward) {
  return finish(op, std::move(shape), std::move(data),
                std::vector<const Tensor<T>*>(inputs), std::move(backward));
}

inline void require_rank(std::string_view op, const Shape& s, std::size_t rank,
                         std::string_view what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + std::string(what) + " must have rank " +
                         std::to_string(rank) + ", got " + to_string(s));
  }
}

}  // namespace icethick::detail
