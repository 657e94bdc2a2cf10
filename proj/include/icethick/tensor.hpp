#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace icethick {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  // Empty until a backward pass reaches this node.
  std::vector<T> grad;
  bool requires_grad = false;
  // Set for results recorded on a tape; false for leaves.
  bool recorded = false;

  // Zero-filled on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Dense row-major tensor with value semantics for its contents: ops always
// allocate a fresh result and never write to their inputs. Copies of a Tensor
// share the same node, which is how parameters keep their identity on a tape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  std::span<const T> data() const { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }
  // Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  // Empty span if no gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  // Gradient or zeros when the node was unreachable from the loss.
  std::vector<T> grad_or_zeros() const;
  void zero_grad() { node_->grad.clear(); }

  // Replace the values of a leaf tensor (optimizer updates, checkpoint loads).
  // Size must match. Not for tensors produced by ops.
  void assign(std::span<const T> values);

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of executed ops. Ops record themselves on the tape that is
// active on the current thread (see TapeScope) whenever at least one input
// requires a gradient; with no active tape nothing is recorded.
template <typename T>
class GradientTape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;
  // Reads output->grad and accumulates into the inputs' grad buffers.
  using BackwardFn = std::function<void(TensorNode<T>& output)>;

  struct Entry {
    std::string op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  void record(std::string_view op, std::vector<NodePtr> inputs, NodePtr output,
              BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse order. Each entry
  // runs at most once; entries whose output never received a gradient are
  // skipped. Throws ContractError for a non-scalar loss or a loss that is
  // neither recorded here nor a leaf requiring grad.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  // Number of backward rules executed by the last backward() call.
  std::size_t replayed() const { return replayed_; }

  static GradientTape* active();

 private:
  template <typename>
  friend class TapeScope;
  std::vector<Entry> entries_;
  std::size_t replayed_ = 0;
};

// Makes a tape active on this thread for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(GradientTape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradientTape<T>* previous_;
};

// Runs backward on the tape that recorded the loss.
template <typename T>
void backward(const Tensor<T>& loss, GradientTape<T>& tape) {
  tape.backward(loss);
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradientTape<float>;
extern template class GradientTape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;

}  // namespace icethick
