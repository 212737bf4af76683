#include "ssm/numeric/tape.hpp"

#include "ssm/errors.hpp"

namespace ssm {

Var Tape::push(Matrix value, bool needs_grad, BackwardFn backward) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{std::move(value), Matrix{}, std::move(backward), needs_grad});
  return Var(this, id);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::param(const GradSlot& slot) {
  if (auto it = params_.find(&slot); it != params_.end()) return Var(this, it->second);
  Var v = push(slot.value, with_grad_, nullptr);
  params_.emplace(&slot, v.id());
  return v;
}

const Matrix& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var input, const Matrix& g) {
  Node& n = nodes_[input.id()];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    if (!n.value.same_shape(g)) {
      throw DimensionError("Tape::accumulate: gradient " + g.shape_string() + " for value " +
                           n.value.shape_string());
    }
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Matrix* Tape::grad_sink(Var input) {
  Node& n = nodes_[input.id()];
  if (!n.needs_grad) return nullptr;
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw PreconditionError("Tape::backward: root belongs to another tape");
  Node& r = nodes_[root.id()];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw DimensionError("Tape::backward: root must be 1x1, got " + r.value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Matrix{};
  r.grad = Matrix(1, 1, 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
}

const Matrix* Tape::param_grad(const GradSlot& slot) const {
  auto it = params_.find(&slot);
  if (it == params_.end() || nodes_[it->second].grad.empty()) return nullptr;
  return &nodes_[it->second].grad;
}

}  // namespace ssm
