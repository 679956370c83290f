#include "flare/grad/optim.hpp"

#include <cmath>

#include "flare/error.hpp"

namespace flare::grad {

float clip_grad_norm(const std::vector<Tensor>& params, float max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    const float* g = p.grad();
    for (int64_t i = 0; i < p.size(); i++) sq += static_cast<double>(g[i]) * g[i];
  }
  float norm = static_cast<float>(std::sqrt(sq));
  if (norm > max_norm && norm > 0.f) {
    float s = max_norm / norm;
    for (const Tensor& p : params) {
      if (!p.has_grad()) continue;
      float* g = const_cast<float*>(p.grad());
      for (int64_t i = 0; i < p.size(); i++) g[i] *= s;
    }
  }
  return norm;
}

AdamState::AdamState(const std::vector<Tensor>& params, float lr_) : lr(lr_) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(static_cast<size_t>(p.size()), 0.f);
    v.emplace_back(static_cast<size_t>(p.size()), 0.f);
  }
}

void adam_step(AdamState& state, std::vector<Tensor>& params) {
  if (state.m.size() != params.size())
    throw ContractError("adam_step: state built for a different parameter set");
  state.step_count++;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t pi = 0; pi < params.size(); pi++) {
    Tensor& p = params[pi];
    if (!p.has_grad()) continue;
    float* w = p.data();
    float* g = p.grad();
    float* mm = state.m[pi].data();
    float* vv = state.v[pi].data();
    const int64_t n = p.size();
    for (int64_t i = 0; i < n; i++) {
      mm[i] = static_cast<float>(b1 * mm[i] + (1.0 - b1) * g[i]);
      vv[i] = static_cast<float>(b2 * vv[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      double mhat = mm[i] / bc1;
      double vhat = vv[i] / bc2;
      w[i] -= static_cast<float>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
    p.zero_grad();
  }
}

}  // namespace flare::grad
