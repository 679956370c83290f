#pragma once

#include <cstdint>
#include <vector>

#include "flare/grad/tensor.hpp"

namespace flare::grad {

// Global L2-norm clipping over a parameter set. Returns the pre-clip norm.
float clip_grad_norm(const std::vector<Tensor>& params, float max_norm);

struct AdamState {
  float lr;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int64_t step_count = 0;
  std::vector<std::vector<float>> m, v;

  AdamState(const std::vector<Tensor>& params, float lr);
};

// Standard bias-corrected Adam update; gradients are zeroed afterwards.
void adam_step(AdamState& state, std::vector<Tensor>& params);

}  // namespace flare::grad
