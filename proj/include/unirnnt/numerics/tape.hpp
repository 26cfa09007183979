#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <utility>
#include <vector>

#include "unirnnt/numerics/tensor.hpp"

namespace unirnnt {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode tape. Values are recorded in evaluation order; backward()
/// walks the records in exact reverse order, accumulating gradients
/// additively. A tape belongs to one thread.
///
/// Parameters enter as leaves that alias external storage (no copy) and
/// own a gradient sink that backward() adds into.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(const Tensor<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Disable to run forwards without retaining backward closures.
  void set_recording(bool on) noexcept { recording_ = on; }
  bool recording() const noexcept { return recording_; }

  Var constant(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  Var param(const Tensor<T>& value, Tensor<T>* grad_sink) {
    Node n;
    n.external = &value;
    n.sink = grad_sink;
    n.needs_grad = recording_ && grad_sink != nullptr;
    return push(std::move(n));
  }

  /// Records an op output. `backward` receives d(root)/d(output) and must
  /// accumulate into the inputs' grads via grad(); it is dropped when no
  /// input needs a gradient or recording is off.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
  }

  Var record(Tensor<T> value, const std::vector<Var>& inputs, Backward backward) {
    Node n;
    n.owned = std::move(value);
    if (recording_) {
      for (Var in : inputs) n.needs_grad = n.needs_grad || nodes_.at(in.id).needs_grad;
      if (n.needs_grad) n.backward = std::move(backward);
    }
    return push(std::move(n));
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.owned;
  }

  /// Address of the storage backing `v`; parameters report the aliased tensor.
  const Tensor<T>* storage(Var v) const { return &value(v); }

  bool wants_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.size() != value(v).size()) n.grad = Tensor<T>(value(v).shape());
    return n.grad;
  }

  void backward(Var root, T seed = T(1)) {
    if (!nodes_.at(root.id).needs_grad) return;
    Tensor<T>& g = grad(root);
    for (auto& x : g.values()) x = seed;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(n.grad);
      if (n.sink) {
        T* dst = n.sink->data();
        const T* src = n.grad.data();
        for (std::size_t k = 0; k < n.grad.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T>* sink = nullptr;
    Tensor<T> grad;
    Backward backward;
    bool needs_grad = false;
  };

  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace unirnnt
