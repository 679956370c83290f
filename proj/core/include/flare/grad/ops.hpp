#pragma once

#include <cstdint>
#include <vector>

#include "flare/grad/tape.hpp"
#include "flare/grad/tensor.hpp"

namespace flare::grad {

// All ops take an optional tape; tape == nullptr is pure inference (no
// recording, no grad bookkeeping). Tensors are 2-D [rows x cols] unless noted;
// a shape of [n] is treated as a column of n scalars where it matters.

// ---- elementwise / linear algebra ----
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);        // same shape
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);        // same shape
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);        // hadamard
Tensor scale(Tape* tape, const Tensor& a, float s);
Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& b);   // [R x d] + [d]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);     // [m x k] . [k x n]
Tensor gelu(Tape* tape, const Tensor& x);
Tensor exp_op(Tape* tape, const Tensor& x);
// clamp with pass-through gradient strictly inside (lo, hi), zero outside.
Tensor clamp(Tape* tape, const Tensor& x, float lo, float hi);
Tensor min_ew(Tape* tape, const Tensor& a, const Tensor& b);     // elementwise min
// out = x + sign * c (c is a constant, not differentiated)
Tensor add_constv(Tape* tape, const Tensor& x, const std::vector<float>& c, float sign);
Tensor mul_constv(Tape* tape, const Tensor& x, const std::vector<float>& c);

// ---- normalization / softmax ----
Tensor softmax(Tape* tape, const Tensor& x);       // rows of [R x n]
Tensor log_softmax(Tape* tape, const Tensor& x);   // rows of [R x n]
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

// ---- gather / scatter / reshaping ----
Tensor embedding(Tape* tape, const Tensor& table, const std::vector<int>& idx);
Tensor gather_rows(Tape* tape, const Tensor& x, const std::vector<int>& rows);
Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts);
Tensor pick_per_row(Tape* tape, const Tensor& x, const std::vector<int>& col);  // [R x C] -> [R]

// ---- reductions / losses (forward accumulates in float64) ----
Tensor sum_all(Tape* tape, const Tensor& x);
Tensor mean_all(Tape* tape, const Tensor& x);
Tensor sum_rows(Tape* tape, const Tensor& x);      // [R x C] -> [R]
Tensor cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int>& targets);
Tensor mse(Tape* tape, const Tensor& pred, const std::vector<float>& target);

// ---- fused multi-head attention ----
// q, k, v: [T x d] with d = heads * head_dim. Rows are grouped into segments
// [seg[i], seg[i+1]); attention never crosses a segment boundary. With causal
// set, query row i (local index within its segment) sees keys 0..i. key_valid
// marks rows that may be attended TO (pads excluded); null means all valid.
// Optional constant prefix keys/values (per segment) extend every query's
// context on the left; gradients into the prefix are discarded.
struct AttnPrefix {
  std::vector<int> offsets;  // size segments+1, row offsets into k / v
  std::vector<float> k, v;   // [prefix_rows x d], row-major
};
struct AttnArgs {
  int heads = 1;
  bool causal = false;
  std::vector<int> seg_offsets;                  // size S+1; covers all T rows
  const std::vector<uint8_t>* key_valid = nullptr;
  const AttnPrefix* prefix = nullptr;
};
Tensor attention(Tape* tape, const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttnArgs& args);

}  // namespace flare::grad
