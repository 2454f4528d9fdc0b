#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "biofm/tensor.hpp"

namespace biofm {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  // Reads this node's grad and accumulates into the inputs it captured.
  std::function<void(const Tensor<T>&)> backward;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

// Copy of the value with no gradient path back to `v`.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return make_var(v->value, false);
}

// Computation record: ops executed against a Graph are appended to its tape in
// execution order, and backward() sweeps the tape exactly once in reverse.
// A Graph constructed with record=false evaluates forward only.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(const Tensor<T>&)>;

  explicit Graph(bool record = true) : recording_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t tape_size() const { return tape_.size(); }

  static bool any_requires_grad(std::initializer_list<const Var<T>*> inputs) {
    for (const Var<T>* in : inputs) {
      if (in && *in && (*in)->requires_grad) return true;
    }
    return false;
  }

  // Wraps an op output. `make_backward` is only invoked when the node needs a
  // gradient, so forward-only graphs pay nothing for closures.
  template <typename MakeBackward>
  Var<T> record(Tensor<T> value, bool needs_grad, MakeBackward&& make_backward) {
    if (!value.all_finite()) throw NumericError("non-finite value produced by forward op");
    auto node = make_var(std::move(value), recording_ && needs_grad);
    if (node->requires_grad) {
      node->backward = make_backward(node.get());
      tape_.push_back(node);
    }
    return node;
  }

  void backward(const Var<T>& loss) {
    if (backward_done_) throw Error("backward() already ran on this graph");
    if (loss->value.size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss->value.shape()));
    }
    backward_done_ = true;
    if (!loss->requires_grad) return;
    loss->ensure_grad().fill(T{1});
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
      Node<T>& node = **it;
      if (node.grad.empty()) continue;
      node.backward(node.grad);
      // Release per-op closures and interior grads once consumed.
      node.backward = nullptr;
    }
    tape_.clear();
  }

 private:
  std::vector<Var<T>> tape_;
  bool recording_;
  bool backward_done_ = false;
};

template <typename T>
inline void accumulate(const Var<T>& target, std::size_t i, T v) {
  target->ensure_grad()[i] += v;
}

}  // namespace biofm
