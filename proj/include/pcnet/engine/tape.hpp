#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pcnet/engine/tensor.hpp"

namespace pcnet {

/// A trainable tensor with its accumulated gradient. Owned by a model,
/// referenced (never owned) by tapes.
template <Real T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // empty until the first backward pass reaches it

  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad = Tensor<T>(); }
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint64_t tape_id = 0;
  std::size_t index = 0;
};

enum class TapeMode {
  kCompute,
  kNoGrad,  // parameters enter as constants; no backward rules are kept
  kTrace,  // ops only propagate shapes and count FLOPs; values are zero-filled
};

/// Linear record of operations for reverse-mode differentiation. Nodes are
/// appended in execution order, so the vector itself is a topological order.
template <Real T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(TapeMode mode = TapeMode::kCompute) : id_(next_id()), mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracing() const { return mode_ == TapeMode::kTrace; }
  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr, nullptr, "constant"); }
  Var leaf(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, nullptr, nullptr, "leaf");
  }
  /// Records a parameter; backward accumulates into p.grad.
  Var param(Param<T>& p) {
    bool rg = mode_ == TapeMode::kCompute;
    return push(p.value, rg, nullptr, rg ? &p : nullptr, "param");
  }

  /// Records the result of an op. The backward rule is kept only when some
  /// input requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn, std::string_view op) {
    bool rg = false;
    for (const auto& v : inputs) rg = rg || requires_grad(v);
    return push(std::move(value), rg, rg ? std::move(fn) : nullptr, nullptr, op);
  }
  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn, std::string_view op) {
    bool rg = false;
    for (const auto& v : inputs) rg = rg || requires_grad(v);
    return push(std::move(value), rg, rg ? std::move(fn) : nullptr, nullptr, op);
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Tensor<T>& value(std::size_t i) const { return nodes_.at(i).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient buffer of a node, zero-allocated on first use.
  Tensor<T>& grad(Var v) { return grad(check(v)); }
  Tensor<T>& grad(std::size_t i) {
    auto& n = nodes_.at(i);
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }
  bool has_grad(Var v) const { return !node(v).grad.empty(); }

  void add_flops(std::uint64_t f) { flops_ += f; }
  std::uint64_t flops() const { return flops_; }

  /// Populates gradients of every requires-grad leaf reachable from `loss`.
  /// Leaf and parameter gradients accumulate across calls; intermediate
  /// gradients are released once propagated.
  void backward(Var loss) {
    if (loss.tape_id != id_ || loss.index >= nodes_.size()) throw Error("backward: loss is not recorded on this tape");
    if (nodes_[loss.index].value.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " + nodes_[loss.index].value.shape().str());
    for (auto& n : nodes_)
      if (n.fn || n.param) n.grad = Tensor<T>();
    grad(loss.index)[0] += T{1};
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (!n.fn) continue;
      nodes_[i].fn(*this, i);
      nodes_[i].grad = Tensor<T>();  // intermediate gradients are consumed
    }
    for (auto& n : nodes_) {
      if (!n.param || n.grad.empty()) continue;
      auto& g = n.param->grad;
      if (g.empty()) g = Tensor<T>::zeros(n.value.shape());
      for (std::size_t k = 0; k < g.numel(); ++k) g[k] += n.grad[k];
    }
  }

  std::string_view op_name(Var v) const { return node(v).op; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn fn;
    Param<T>* param = nullptr;
    std::string_view op;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
  }

  std::size_t check(Var v) const {
    if (v.tape_id != id_ || v.index >= nodes_.size()) throw Error("variable does not belong to this tape");
    return v.index;
  }
  const Node& node(Var v) const { return nodes_[check(v)]; }

  Var push(Tensor<T> value, bool rg, BackwardFn fn, Param<T>* p, std::string_view op) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), rg, std::move(fn), p, op});
    return Var{id_, nodes_.size() - 1};
  }

  std::uint64_t id_;
  TapeMode mode_;
  std::vector<Node> nodes_;
  std::uint64_t flops_ = 0;
};

}  // namespace pcnet
