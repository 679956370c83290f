#include "flare/grad/tensor.hpp"

#include "flare/error.hpp"

namespace flare::grad {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ContractError("tensor shape has non-positive dim " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); i++) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

static std::shared_ptr<TensorImpl> make_impl(Shape s) {
  auto p = std::make_shared<TensorImpl>();
  p->shape = std::move(s);
  p->data.assign(static_cast<size_t>(shape_numel(p->shape)), 0.f);
  return p;
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  Tensor t;
  t.p_ = make_impl(std::move(s));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(Shape s, float v) {
  Tensor t = zeros(std::move(s));
  for (auto& x : t.p_->data) x = v;
  return t;
}

Tensor Tensor::from(Shape s, std::vector<float> v, bool requires_grad) {
  Tensor t;
  t.p_ = std::make_shared<TensorImpl>();
  t.p_->shape = std::move(s);
  if (static_cast<int64_t>(v.size()) != shape_numel(t.p_->shape))
    throw DimensionError("data length " + std::to_string(v.size()) +
                         " does not match shape " + shape_str(t.p_->shape));
  t.p_->data = std::move(v);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(float v) { return from({1}, {v}); }

Tensor Tensor::randn(Shape s, Rng& rng, float stdev, bool requires_grad) {
  Tensor t = zeros(std::move(s));
  for (auto& x : t.p_->data) x = rng.normal() * stdev;
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::rand_uniform(Shape s, Rng& rng, float lo, float hi, bool requires_grad) {
  Tensor t = zeros(std::move(s));
  for (auto& x : t.p_->data) x = rng.uniformf(lo, hi);
  t.set_requires_grad(requires_grad);
  return t;
}

void Tensor::set_requires_grad(bool v) {
  p_->requires_grad = v;
  if (v) {
    p_->needs_grad = true;
    p_->ensure_grad();
  }
}

float Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return p_->data[0];
}

double Tensor::item64() const {
  if (size() != 1) throw ContractError("item64() on non-scalar tensor " + shape_str(shape()));
  return p_->has_scalar64 ? p_->scalar64 : static_cast<double>(p_->data[0]);
}

void Tensor::zero_grad() {
  if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), 0.f);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.p_ = std::make_shared<TensorImpl>();
  t.p_->shape = p_->shape;
  t.p_->data = p_->data;
  return t;
}

}  // namespace flare::grad
