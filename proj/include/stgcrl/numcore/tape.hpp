#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/tensor.hpp"

namespace stgcrl {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape has not been consumed by backward().
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t index() const noexcept { return index_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Result of a backward pass: gradients for every parameter and every
/// grad-requiring input leaf that the outputs depend on.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const {
    auto it = params_.find(&p);
    return it == params_.end() ? nullptr : &it->second;
  }
  const Tensor& operator[](const Parameter& p) const {
    const Tensor* g = find(p);
    if (!g) throw ContractViolation("Gradients: no gradient recorded for parameter '" + p.name + "'");
    return *g;
  }
  const Tensor* find(Var leaf) const {
    auto it = leaves_.find(leaf.index());
    return it == leaves_.end() ? nullptr : &it->second;
  }
  const Tensor& operator[](Var leaf) const {
    const Tensor* g = find(leaf);
    if (!g) throw ContractViolation("Gradients: no gradient recorded for input leaf");
    return *g;
  }
  std::size_t num_params() const noexcept { return params_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const Parameter*, Tensor> params_;
  std::unordered_map<std::size_t, Tensor> leaves_;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
/// node vector is already a topological order; backward walks it in reverse
/// and visits each node once.
class Tape {
 public:
  /// Accumulates the node's upstream gradient into its inputs' gradient
  /// buffers via Tape::grad_buffer.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// With gradients disabled, leaves are recorded as constants and no
  /// backward closures are kept (inference mode).
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor value) { return push("constant", std::move(value), false, nullptr, {}); }

  /// Leaf that receives a gradient (reported through Gradients::operator[](Var)).
  Var input(Tensor value) { return push("input", std::move(value), grad_enabled_, nullptr, {}); }

  /// Leaf bound to a parameter. The same parameter always maps to one node.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Var v = push("param", p.value, grad_enabled_, &p, {});
    param_nodes_.emplace(&p, v.index());
    return v;
  }

  /// Appends the result of a primitive. The node requires a gradient iff any
  /// input does; otherwise the backward closure is dropped.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      require(in.tape() == this, std::string(op) + ": input belongs to a different tape");
      needs = needs || nodes_[in.index()].requires_grad;
    }
    if (!value.all_finite())
      throw NumericFailure("non-finite value produced by op '" + std::string(op) + "'");
    return push(op, std::move(value), needs, nullptr, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor& value(std::size_t i) const { return nodes_.at(i).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index()).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulator of `v` during backward; zero-initialized on first use.
  /// Returns nullptr when `v` does not require a gradient.
  Tensor* grad_buffer(Var v) {
    Node& n = nodes_[v.index()];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return &n.grad;
  }

  /// Reverse pass from a scalar loss. Consumes the tape.
  Gradients backward(Var loss) {
    require(loss.tape() == this, "backward: loss belongs to a different tape");
    require(loss.value().size() == 1,
            "backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    Tensor seed(loss.shape(), 1.0);
    return backward(std::span<const Var>(&loss, 1), std::span<const Tensor>(&seed, 1));
  }

  /// Reverse pass seeded with explicit upstream gradients for several outputs
  /// (vector-Jacobian product). Consumes the tape.
  Gradients backward(std::span<const Var> outputs, std::span<const Tensor> seeds) {
    require(outputs.size() == seeds.size(), "backward: outputs/seeds length mismatch");
    for (std::size_t k = 0; k < outputs.size(); ++k) {
      require(outputs[k].tape() == this, "backward: output belongs to a different tape");
      require(seeds[k].shape() == outputs[k].shape(), "backward: seed shape mismatch");
      if (Tensor* g = grad_buffer(outputs[k])) {
        auto dst = g->data();
        auto src = seeds[k].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      if (!n.grad.all_finite())
        throw NumericFailure("non-finite gradient flowing into op '" + std::string(n.op) + "'");
      Tensor g = std::move(n.grad);
      n.backward(*this, g);
      n.backward = nullptr;
    }
    Gradients out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      const bool leaf = n.requires_grad && (n.param != nullptr || n.op == "input");
      if (!leaf) continue;
      if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
      if (!n.grad.all_finite())
        throw NumericFailure("non-finite gradient at leaf '" + std::string(n.op) + "'");
      if (n.param)
        out.params_.emplace(n.param, std::move(n.grad));
      else
        out.leaves_.emplace(i, std::move(n.grad));
    }
    clear();
    return out;
  }

  void clear() {
    nodes_.clear();
    param_nodes_.clear();
  }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(std::string_view op, Tensor value, bool requires_grad, Parameter* p, BackwardFn fn) {
    nodes_.push_back(Node{op, std::move(value), Tensor{}, requires_grad, p, std::move(fn)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
};

inline const Tensor& Var::value() const {
  require(tape_ != nullptr, "Var: null handle");
  return tape_->value(index_);
}

}  // namespace stgcrl
