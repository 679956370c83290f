#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "flare/grad/tensor.hpp"

namespace flare::grad {

// Records ops in execution order; backward() replays them once in reverse.
// Gradients accumulate additively, so calling backward twice doubles leaf
// gradients (intermediate grads are re-zeroed per call).
class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> outputs;
    std::function<void()> backward;
  };

  void record(std::vector<std::shared_ptr<TensorImpl>> outputs,
              std::function<void()> backward) {
    nodes_.push_back({std::move(outputs), std::move(backward)});
  }

  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace flare::grad
