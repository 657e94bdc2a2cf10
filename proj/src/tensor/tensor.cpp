#include "icethick/tensor.hpp"

#include <algorithm>

#include "icethick/error.hpp"

namespace icethick {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (const auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  node_ = std::make_shared<TensorNode<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw ContractError("item() needs a single-element tensor, shape is " + to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
std::vector<T> Tensor<T>::grad_or_zeros() const {
  if (node_->grad.empty()) return std::vector<T>(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::assign(std::span<const T> values) {
  if (values.size() != node_->data.size()) {
    throw DimensionError("assign: expected " + std::to_string(node_->data.size()) +
                         " values, got " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), node_->data.begin());
}

namespace {
template <typename T>
GradientTape<T>*& active_tape() {
  thread_local GradientTape<T>* tape = nullptr;
  return tape;
}
}  // namespace

template <typename T>
GradientTape<T>* GradientTape<T>::active() {
  return active_tape<T>();
}

template <typename T>
void GradientTape<T>::record(std::string_view op, std::vector<NodePtr> inputs,
                             NodePtr output, BackwardFn backward) {
  output->recorded = true;
  entries_.push_back(Entry{std::string(op), std::move(inputs), std::move(output),
                           std::move(backward)});
}

template <typename T>
void GradientTape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  const auto& target = loss.node();
  const bool recorded =
      std::any_of(entries_.begin(), entries_.end(),
                  [&](const Entry& e) { return e.output == target; });
  if (!recorded && (target->recorded || !target->requires_grad)) {
    throw ContractError("backward: loss was not recorded on this tape");
  }
  target->grad_buffer()[0] += T(1);
  replayed_ = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it->output);
    ++replayed_;
  }
}

template <typename T>
TapeScope<T>::TapeScope(GradientTape<T>& tape) : previous_(active_tape<T>()) {
  active_tape<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_tape<T>() = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientTape<float>;
template class GradientTape<double>;
template class TapeScope<float>;
template class TapeScope<double>;

}  // namespace icethick
