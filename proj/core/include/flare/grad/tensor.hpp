#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "flare/rng.hpp"

namespace flare::grad {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // allocated iff gradient can flow into this tensor
  bool requires_grad = false;  // leaf parameter (optimizer-owned)
  bool needs_grad = false;     // true for leaves and tape intermediates on a grad path
  // 64-bit value of the last reduction that produced this scalar, when applicable.
  double scalar64 = 0.0;
  bool has_scalar64 = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.f);
  }
};

// Shared handle. Ops return new handles; the tape holds references for backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, float v);
  static Tensor from(Shape s, std::vector<float> v, bool requires_grad = false);
  static Tensor scalar(float v);
  static Tensor randn(Shape s, Rng& rng, float stdev, bool requires_grad = false);
  static Tensor rand_uniform(Shape s, Rng& rng, float lo, float hi, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(p_->data.size()); }

  float* data() { return p_->data.data(); }
  const float* data() const { return p_->data.data(); }
  float* grad() { return p_->grad.data(); }
  const float* grad() const { return p_->grad.data(); }
  bool has_grad() const { return !p_->grad.empty(); }

  bool requires_grad() const { return p_->requires_grad; }
  bool needs_grad() const { return p_->needs_grad; }
  void set_requires_grad(bool v);

  float at(int64_t i) const { return p_->data[static_cast<size_t>(i)]; }
  float& at(int64_t i) { return p_->data[static_cast<size_t>(i)]; }
  // Scalar value; reductions also keep a float64 copy, see item64.
  float item() const;
  double item64() const;

  void zero_grad();
  Tensor clone() const;  // deep copy of values; fresh grad state

  TensorImpl* impl() const { return p_.get(); }
  std::shared_ptr<TensorImpl> ptr() const { return p_; }

 private:
  std::shared_ptr<TensorImpl> p_;
};

}  // namespace flare::grad
