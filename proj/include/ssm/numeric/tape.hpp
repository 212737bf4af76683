#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssm/numeric/grad.hpp"
#include "ssm/numeric/matrix.hpp"

namespace ssm {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode differentiation tape over Matrix values.
///
/// Nodes are appended in evaluation order, so reverse index order is a valid
/// reverse topological order. Nodes built only from constants carry no
/// gradient and are skipped during the backward sweep. Parameter leaves refer
/// to a GradSlot; after `backward`, their gradients are read back with
/// `param_grad` (the slot itself is not modified, which keeps forward passes
/// usable on const parameters).
class Tape {
 public:
  // Propagates grad(self) into the node's inputs via `accumulate`.
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  // Without gradients, parameters enter as constants and nothing is recorded
  // for the backward sweep.
  explicit Tape(bool with_grad = true) : with_grad_(with_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // One leaf per slot per tape; repeated calls return the same node.
  Var param(const GradSlot& slot);

  // `backward` is only stored (and type-erased) when an input needs a gradient.
  template <class F>
  Var record(Matrix value, std::initializer_list<Var> inputs, F&& backward) {
    return record_if(std::move(value), any_needs_grad(inputs), std::forward<F>(backward));
  }
  template <class F>
  Var record(Matrix value, const std::vector<Var>& inputs, F&& backward) {
    return record_if(std::move(value), any_needs_grad(inputs), std::forward<F>(backward));
  }

  const Matrix& value(std::uint32_t id) const { return nodes_[id].value; }
  // Gradient of the root with respect to node `id`; zero-filled on first access.
  const Matrix& grad(std::uint32_t id);
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  void accumulate(Var input, const Matrix& g);
  // Gradient buffer of `input` for in-place accumulation (zero-filled on
  // first use), or nullptr when `input` needs no gradient.
  Matrix* grad_sink(Var input);

  // Seeds d(root)/d(root) = 1 and sweeps backwards. `root` must be 1x1.
  void backward(Var root);

  // Gradient with respect to a parameter leaf, or nullptr when the slot was
  // never bound to this tape or received no gradient (treat as zero).
  const Matrix* param_grad(const GradSlot& slot) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Var push(Matrix value, bool needs_grad, BackwardFn backward);

  template <class Range>
  bool any_needs_grad(const Range& inputs) const {
    for (const Var& in : inputs) {
      if (nodes_[in.id()].needs_grad) return true;
    }
    return false;
  }
  template <class F>
  Var record_if(Matrix value, bool needs, F&& backward) {
    if (!needs) return push(std::move(value), false, nullptr);
    return push(std::move(value), true, BackwardFn(std::forward<F>(backward)));
  }

  std::vector<Node> nodes_;
  std::unordered_map<const GradSlot*, std::uint32_t> params_;
  bool with_grad_ = true;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

}  // namespace ssm
