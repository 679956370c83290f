#include "flare/grad/tape.hpp"

#include <algorithm>

#include "flare/error.hpp"

namespace flare::grad {

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward requires a scalar loss");
  TensorImpl* target = loss.impl();
  bool on_tape = false;
  for (const auto& n : nodes_) {
    for (const auto& o : n.outputs) {
      if (o.get() == target) on_tape = true;
      // Intermediates get fresh gradient storage per backward pass; leaves
      // (requires_grad) keep accumulating across calls.
      if (!o->requires_grad && o->needs_grad) {
        o->ensure_grad();
        std::fill(o->grad.begin(), o->grad.end(), 0.f);
      }
    }
  }
  if (!on_tape) throw ContractError("backward: loss tensor is not on this tape");
  target->ensure_grad();
  target->grad[0] = 1.f;
  for (size_t i = nodes_.size(); i > 0; i--) {
    if (nodes_[i - 1].backward) nodes_[i - 1].backward();
  }
}

}  // namespace flare::grad
