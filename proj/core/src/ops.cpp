#include "flare/grad/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "flare/error.hpp"

namespace flare::grad {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

namespace {

// Flatten any rank to [rows x cols] with rows = dim 0.
int rows_of(const Tensor& t) { return t.rank() == 0 ? 1 : t.dim(0); }
int cols_of(const Tensor& t) {
  return static_cast<int>(t.size() / std::max(1, rows_of(t)));
}

Tensor make_out(Tape* tape, Shape s, std::initializer_list<const Tensor*> ins) {
  Tensor out = Tensor::zeros(std::move(s));
  if (tape) {
    bool ng = false;
    for (const Tensor* t : ins) ng = ng || t->needs_grad();
    out.impl()->needs_grad = ng;
  }
  return out;
}

bool recording(Tape* tape, const Tensor& out) {
  return tape != nullptr && out.needs_grad();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_finite(const Tensor& t, const char* op) {
  const float* p = t.data();
  for (int64_t i = 0; i < t.size(); i++)
    if (!std::isfinite(p[i]))
      throw NumericError(std::string(op) + ": non-finite input at index " + std::to_string(i));
}

void accum(TensorImpl* t, const float* g, int64_t n) {
  if (!t->needs_grad) return;
  t->ensure_grad();
  float* dst = t->grad.data();
  for (int64_t i = 0; i < n; i++) dst[i] += g[i];
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_out(tape, a.shape(), {&a, &b});
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = a.at(i) + b.at(i);
  if (recording(tape, out)) {
    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    tape->record({oi}, [ai, bi, oi, n] {
      accum(ai.get(), oi->grad.data(), n);
      accum(bi.get(), oi->grad.data(), n);
    });
  }
  return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_out(tape, a.shape(), {&a, &b});
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = a.at(i) - b.at(i);
  if (recording(tape, out)) {
    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    tape->record({oi}, [ai, bi, oi, n] {
      accum(ai.get(), oi->grad.data(), n);
      if (bi->needs_grad) {
        bi->ensure_grad();
        for (int64_t i = 0; i < n; i++) bi->grad[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_out(tape, a.shape(), {&a, &b});
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = a.at(i) * b.at(i);
  if (recording(tape, out)) {
    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    tape->record({oi}, [ai, bi, oi, n] {
      if (ai->needs_grad) {
        ai->ensure_grad();
        for (int64_t i = 0; i < n; i++) ai->grad[i] += oi->grad[i] * bi->data[i];
      }
      if (bi->needs_grad) {
        bi->ensure_grad();
        for (int64_t i = 0; i < n; i++) bi->grad[i] += oi->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, float s) {
  Tensor out = make_out(tape, a.shape(), {&a});
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = a.at(i) * s;
  if (a.size() == 1 && a.impl()->has_scalar64) {
    out.impl()->scalar64 = a.item64() * s;
    out.impl()->has_scalar64 = true;
  }
  if (recording(tape, out)) {
    auto ai = a.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [ai, oi, s, n] {
      if (ai->needs_grad) {
        ai->ensure_grad();
        for (int64_t i = 0; i < n; i++) ai->grad[i] += oi->grad[i] * s;
      }
    });
  }
  return out;
}

Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& b) {
  const int R = rows_of(x), d = cols_of(x);
  if (b.size() != d)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
  Tensor out = make_out(tape, x.shape(), {&x, &b});
  for (int r = 0; r < R; r++)
    for (int j = 0; j < d; j++)
      out.data()[r * d + j] = x.at(r * d + j) + b.at(j);
  if (recording(tape, out)) {
    auto xi = x.ptr(), bi = b.ptr(), oi = out.ptr();
    tape->record({oi}, [xi, bi, oi, R, d] {
      accum(xi.get(), oi->grad.data(), static_cast<int64_t>(R) * d);
      if (bi->needs_grad) {
        bi->ensure_grad();
        for (int r = 0; r < R; r++)
          for (int j = 0; j < d; j++) bi->grad[j] += oi->grad[r * d + j];
      }
    });
  }
  return out;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_out(tape, {m, n}, {&a, &b});
  CMap A(a.data(), m, k), B(b.data(), k, n);
  MMap C(out.data(), m, n);
  C.noalias() = A * B;
  if (recording(tape, out)) {
    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    tape->record({oi}, [ai, bi, oi, m, k, n] {
      CMap A2(ai->data.data(), m, k), B2(bi->data.data(), k, n);
      CMap dC(oi->grad.data(), m, n);
      if (ai->needs_grad) {
        ai->ensure_grad();
        MMap dA(ai->grad.data(), m, k);
        dA.noalias() += dC * B2.transpose();
      }
      if (bi->needs_grad) {
        bi->ensure_grad();
        MMap dB(bi->grad.data(), k, n);
        dB.noalias() += A2.transpose() * dC;
      }
    });
  }
  return out;
}

Tensor gelu(Tape* tape, const Tensor& x) {
  Tensor out = make_out(tape, x.shape(), {&x});
  const int64_t n = x.size();
  constexpr float kInvSqrt2 = 0.7071067811865476f;
  for (int64_t i = 0; i < n; i++) {
    float v = x.at(i);
    out.data()[i] = 0.5f * v * (1.f + std::erf(v * kInvSqrt2));
  }
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, n] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      constexpr float kInvSqrt2Pi = 0.3989422804014327f;
      for (int64_t i = 0; i < n; i++) {
        float v = xi->data[i];
        float cdf = 0.5f * (1.f + std::erf(v * 0.7071067811865476f));
        float pdf = kInvSqrt2Pi * std::exp(-0.5f * v * v);
        xi->grad[i] += oi->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor exp_op(Tape* tape, const Tensor& x) {
  Tensor out = make_out(tape, x.shape(), {&x});
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = std::exp(x.at(i));
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, n] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (int64_t i = 0; i < n; i++) xi->grad[i] += oi->grad[i] * oi->data[i];
    });
  }
  return out;
}

Tensor clamp(Tape* tape, const Tensor& x, float lo, float hi) {
  Tensor out = make_out(tape, x.shape(), {&x});
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; i++)
    out.data()[i] = std::min(hi, std::max(lo, x.at(i)));
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, lo, hi, n] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (int64_t i = 0; i < n; i++) {
        float v = xi->data[i];
        if (v > lo && v < hi) xi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor min_ew(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "min_ew");
  Tensor out = make_out(tape, a.shape(), {&a, &b});
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = std::min(a.at(i), b.at(i));
  if (recording(tape, out)) {
    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    tape->record({oi}, [ai, bi, oi, n] {
      for (int64_t i = 0; i < n; i++) {
        bool first = ai->data[i] <= bi->data[i];
        TensorImpl* sel = first ? ai.get() : bi.get();
        if (sel->needs_grad) {
          sel->ensure_grad();
          sel->grad[i] += oi->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor add_constv(Tape* tape, const Tensor& x, const std::vector<float>& c, float sign) {
  if (static_cast<int64_t>(c.size()) != x.size())
    throw DimensionError("add_constv: constant length " + std::to_string(c.size()) +
                         " vs tensor " + shape_str(x.shape()));
  Tensor out = make_out(tape, x.shape(), {&x});
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = x.at(i) + sign * c[static_cast<size_t>(i)];
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, n] { accum(xi.get(), oi->grad.data(), n); });
  }
  return out;
}

Tensor mul_constv(Tape* tape, const Tensor& x, const std::vector<float>& c) {
  if (static_cast<int64_t>(c.size()) != x.size())
    throw DimensionError("mul_constv: constant length " + std::to_string(c.size()) +
                         " vs tensor " + shape_str(x.shape()));
  Tensor out = make_out(tape, x.shape(), {&x});
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; i++) out.data()[i] = x.at(i) * c[static_cast<size_t>(i)];
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    auto cc = c;
    tape->record({oi}, [xi, oi, cc, n] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (int64_t i = 0; i < n; i++) xi->grad[i] += oi->grad[i] * cc[static_cast<size_t>(i)];
    });
  }
  return out;
}

Tensor softmax(Tape* tape, const Tensor& x) {
  check_finite(x, "softmax");
  const int R = rows_of(x), n = cols_of(x);
  if (n < 1) throw ContractError("softmax: empty rows");
  Tensor out = make_out(tape, x.shape(), {&x});
  for (int r = 0; r < R; r++) {
    const float* xr = x.data() + static_cast<int64_t>(r) * n;
    float* yr = out.data() + static_cast<int64_t>(r) * n;
    float m = xr[0];
    for (int j = 1; j < n; j++) m = std::max(m, xr[j]);
    double z = 0.0;
    for (int j = 0; j < n; j++) z += std::exp(static_cast<double>(xr[j] - m));
    for (int j = 0; j < n; j++)
      yr[j] = static_cast<float>(std::exp(static_cast<double>(xr[j] - m)) / z);
  }
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, R, n] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (int r = 0; r < R; r++) {
        const float* p = oi->data.data() + static_cast<int64_t>(r) * n;
        const float* dy = oi->grad.data() + static_cast<int64_t>(r) * n;
        float* dx = xi->grad.data() + static_cast<int64_t>(r) * n;
        double dot = 0.0;
        for (int j = 0; j < n; j++) dot += static_cast<double>(dy[j]) * p[j];
        for (int j = 0; j < n; j++)
          dx[j] += p[j] * (dy[j] - static_cast<float>(dot));
      }
    });
  }
  return out;
}

Tensor log_softmax(Tape* tape, const Tensor& x) {
  check_finite(x, "log_softmax");
  const int R = rows_of(x), n = cols_of(x);
  if (n < 1) throw ContractError("log_softmax: empty rows");
  Tensor out = make_out(tape, x.shape(), {&x});
  for (int r = 0; r < R; r++) {
    const float* xr = x.data() + static_cast<int64_t>(r) * n;
    float* yr = out.data() + static_cast<int64_t>(r) * n;
    float m = xr[0];
    for (int j = 1; j < n; j++) m = std::max(m, xr[j]);
    double z = 0.0;
    for (int j = 0; j < n; j++) z += std::exp(static_cast<double>(xr[j] - m));
    double lse = static_cast<double>(m) + std::log(z);
    for (int j = 0; j < n; j++) yr[j] = static_cast<float>(xr[j] - lse);
  }
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, R, n] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (int r = 0; r < R; r++) {
        const float* y = oi->data.data() + static_cast<int64_t>(r) * n;
        const float* dy = oi->grad.data() + static_cast<int64_t>(r) * n;
        float* dx = xi->grad.data() + static_cast<int64_t>(r) * n;
        double s = 0.0;
        for (int j = 0; j < n; j++) s += dy[j];
        for (int j = 0; j < n; j++)
          dx[j] += dy[j] - std::exp(y[j]) * static_cast<float>(s);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const int R = rows_of(x), d = cols_of(x);
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " vs row width " + std::to_string(d));
  constexpr double kEps = 1e-5;
  Tensor out = make_out(tape, x.shape(), {&x, &gain, &bias});
  auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(R) * d);
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(R));
  for (int r = 0; r < R; r++) {
    const float* xr = x.data() + static_cast<int64_t>(r) * d;
    double mean = 0.0;
    for (int j = 0; j < d; j++) mean += xr[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; j++) {
      double c = xr[j] - mean;
      var += c * c;
    }
    var /= d;
    float is = static_cast<float>(1.0 / std::sqrt(var + kEps));
    (*inv_std)[static_cast<size_t>(r)] = is;
    float* h = xhat->data() + static_cast<int64_t>(r) * d;
    float* yr = out.data() + static_cast<int64_t>(r) * d;
    for (int j = 0; j < d; j++) {
      h[j] = static_cast<float>((xr[j] - mean)) * is;
      yr[j] = h[j] * gain.at(j) + bias.at(j);
    }
  }
  if (recording(tape, out)) {
    auto xi = x.ptr(), gi = gain.ptr(), bi = bias.ptr(), oi = out.ptr();
    tape->record({oi}, [xi, gi, bi, oi, xhat, inv_std, R, d] {
      for (int r = 0; r < R; r++) {
        const float* dy = oi->grad.data() + static_cast<int64_t>(r) * d;
        const float* h = xhat->data() + static_cast<int64_t>(r) * d;
        if (gi->needs_grad) {
          gi->ensure_grad();
          for (int j = 0; j < d; j++) gi->grad[j] += dy[j] * h[j];
        }
        if (bi->needs_grad) {
          bi->ensure_grad();
          for (int j = 0; j < d; j++) bi->grad[j] += dy[j];
        }
        if (xi->needs_grad) {
          xi->ensure_grad();
          float* dx = xi->grad.data() + static_cast<int64_t>(r) * d;
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < d; j++) {
            double dg = static_cast<double>(dy[j]) * gi->data[j];
            m1 += dg;
            m2 += dg * h[j];
          }
          m1 /= d;
          m2 /= d;
          float is = (*inv_std)[static_cast<size_t>(r)];
          for (int j = 0; j < d; j++) {
            double dg = static_cast<double>(dy[j]) * gi->data[j];
            dx[j] += static_cast<float>(is * (dg - m1 - h[j] * m2));
          }
        }
      }
    });
  }
  return out;
}

namespace {
Tensor gather_impl(Tape* tape, const Tensor& src, const std::vector<int>& idx,
                   const char* op) {
  const int R = rows_of(src), d = cols_of(src);
  for (int i : idx)
    if (i < 0 || i >= R)
      throw ContractError(std::string(op) + ": row index " + std::to_string(i) +
                          " out of range [0," + std::to_string(R) + ")");
  Tensor out = make_out(tape, {static_cast<int>(idx.size()), d}, {&src});
  for (size_t r = 0; r < idx.size(); r++)
    std::memcpy(out.data() + r * static_cast<size_t>(d),
                src.data() + static_cast<size_t>(idx[r]) * d,
                sizeof(float) * static_cast<size_t>(d));
  if (recording(tape, out)) {
    auto si = src.ptr();
    auto oi = out.ptr();
    auto ic = idx;
    tape->record({oi}, [si, oi, ic, d] {
      if (!si->needs_grad) return;
      si->ensure_grad();
      for (size_t r = 0; r < ic.size(); r++) {
        const float* g = oi->grad.data() + r * static_cast<size_t>(d);
        float* dst = si->grad.data() + static_cast<size_t>(ic[r]) * d;
        for (int j = 0; j < d; j++) dst[j] += g[j];
      }
    });
  }
  return out;
}
}  // namespace

Tensor embedding(Tape* tape, const Tensor& table, const std::vector<int>& idx) {
  return gather_impl(tape, table, idx, "embedding");
}

Tensor gather_rows(Tape* tape, const Tensor& x, const std::vector<int>& rows) {
  return gather_impl(tape, x, rows, "gather_rows");
}

Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const int d = cols_of(parts[0]);
  int total = 0;
  for (const Tensor& p : parts) {
    if (cols_of(p) != d)
      throw DimensionError("concat_rows: row width mismatch " +
                           shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    total += rows_of(p);
  }
  Tensor out = Tensor::zeros({total, d});
  bool ng = false;
  for (const Tensor& p : parts) ng = ng || p.needs_grad();
  if (tape) out.impl()->needs_grad = ng;
  int off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.data() + static_cast<size_t>(off) * d, p.data(),
                sizeof(float) * static_cast<size_t>(p.size()));
    off += rows_of(p);
  }
  if (recording(tape, out)) {
    std::vector<std::shared_ptr<TensorImpl>> pis;
    pis.reserve(parts.size());
    for (const Tensor& p : parts) pis.push_back(p.ptr());
    auto oi = out.ptr();
    tape->record({oi}, [pis, oi, d] {
      size_t off2 = 0;
      for (const auto& pi : pis) {
        size_t n = pi->data.size();
        if (pi->needs_grad) {
          pi->ensure_grad();
          const float* g = oi->grad.data() + off2 * static_cast<size_t>(d);
          for (size_t i = 0; i < n; i++) pi->grad[i] += g[i];
        }
        off2 += n / static_cast<size_t>(d);
      }
    });
  }
  return out;
}

Tensor pick_per_row(Tape* tape, const Tensor& x, const std::vector<int>& col) {
  const int R = rows_of(x), C = cols_of(x);
  if (static_cast<int>(col.size()) != R)
    throw DimensionError("pick_per_row: " + std::to_string(col.size()) +
                         " indices vs " + std::to_string(R) + " rows");
  for (int c : col)
    if (c < 0 || c >= C)
      throw ContractError("pick_per_row: column " + std::to_string(c) + " out of range");
  Tensor out = make_out(tape, {R}, {&x});
  for (int r = 0; r < R; r++) out.data()[r] = x.at(static_cast<int64_t>(r) * C + col[static_cast<size_t>(r)]);
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    auto cc = col;
    tape->record({oi}, [xi, oi, cc, C] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (size_t r = 0; r < cc.size(); r++)
        xi->grad[r * static_cast<size_t>(C) + static_cast<size_t>(cc[r])] += oi->grad[r];
    });
  }
  return out;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
  Tensor out = make_out(tape, {1}, {&x});
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); i++) s += x.at(i);
  out.data()[0] = static_cast<float>(s);
  out.impl()->scalar64 = s;
  out.impl()->has_scalar64 = true;
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      float g = oi->grad[0];
      for (auto& v : xi->grad) v += g;
    });
  }
  return out;
}

Tensor mean_all(Tape* tape, const Tensor& x) {
  Tensor out = make_out(tape, {1}, {&x});
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); i++) s += x.at(i);
  s /= static_cast<double>(x.size());
  out.data()[0] = static_cast<float>(s);
  out.impl()->scalar64 = s;
  out.impl()->has_scalar64 = true;
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    float inv = 1.f / static_cast<float>(x.size());
    tape->record({oi}, [xi, oi, inv] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      float g = oi->grad[0] * inv;
      for (auto& v : xi->grad) v += g;
    });
  }
  return out;
}

Tensor sum_rows(Tape* tape, const Tensor& x) {
  const int R = rows_of(x), C = cols_of(x);
  Tensor out = make_out(tape, {R}, {&x});
  for (int r = 0; r < R; r++) {
    double s = 0.0;
    for (int j = 0; j < C; j++) s += x.at(static_cast<int64_t>(r) * C + j);
    out.data()[r] = static_cast<float>(s);
  }
  if (recording(tape, out)) {
    auto xi = x.ptr();
    auto oi = out.ptr();
    tape->record({oi}, [xi, oi, R, C] {
      if (!xi->needs_grad) return;
      xi->ensure_grad();
      for (int r = 0; r < R; r++) {
        float g = oi->grad[r];
        float* dst = xi->grad.data() + static_cast<int64_t>(r) * C;
        for (int j = 0; j < C; j++) dst[j] += g;
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int>& targets) {
  check_finite(logits, "cross_entropy");
  const int B = rows_of(logits), n = cols_of(logits);
  if (static_cast<int>(targets.size()) != B)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets vs batch " + std::to_string(B));
  for (int t : targets)
    if (t < 0 || t >= n)
      throw ContractError("cross_entropy: target " + std::to_string(t) +
                          " out of range [0," + std::to_string(n) + ")");
  Tensor out = make_out(tape, {1}, {&logits});
  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(B) * n);
  double total = 0.0;
  for (int r = 0; r < B; r++) {
    const float* xr = logits.data() + static_cast<int64_t>(r) * n;
    float m = xr[0];
    for (int j = 1; j < n; j++) m = std::max(m, xr[j]);
    double z = 0.0;
    for (int j = 0; j < n; j++) z += std::exp(static_cast<double>(xr[j] - m));
    double lse = static_cast<double>(m) + std::log(z);
    float* p = probs->data() + static_cast<int64_t>(r) * n;
    for (int j = 0; j < n; j++)
      p[j] = static_cast<float>(std::exp(static_cast<double>(xr[j]) - lse));
    total += lse - static_cast<double>(xr[targets[static_cast<size_t>(r)]]);
  }
  total /= B;
  out.data()[0] = static_cast<float>(total);
  out.impl()->scalar64 = total;
  out.impl()->has_scalar64 = true;
  if (recording(tape, out)) {
    auto li = logits.ptr();
    auto oi = out.ptr();
    auto tc = targets;
    tape->record({oi}, [li, oi, probs, tc, B, n] {
      if (!li->needs_grad) return;
      li->ensure_grad();
      float g = oi->grad[0] / static_cast<float>(B);
      for (int r = 0; r < B; r++) {
        const float* p = probs->data() + static_cast<int64_t>(r) * n;
        float* dx = li->grad.data() + static_cast<int64_t>(r) * n;
        for (int j = 0; j < n; j++) dx[j] += g * p[j];
        dx[tc[static_cast<size_t>(r)]] -= g;
      }
    });
  }
  return out;
}

Tensor mse(Tape* tape, const Tensor& pred, const std::vector<float>& target) {
  if (static_cast<int64_t>(target.size()) != pred.size())
    throw DimensionError("mse: target length " + std::to_string(target.size()) +
                         " vs pred " + shape_str(pred.shape()));
  Tensor out = make_out(tape, {1}, {&pred});
  const int64_t n = pred.size();
  double s = 0.0;
  for (int64_t i = 0; i < n; i++) {
    double d = static_cast<double>(pred.at(i)) - target[static_cast<size_t>(i)];
    s += d * d;
  }
  s /= static_cast<double>(n);
  out.data()[0] = static_cast<float>(s);
  out.impl()->scalar64 = s;
  out.impl()->has_scalar64 = true;
  if (recording(tape, out)) {
    auto pi = pred.ptr();
    auto oi = out.ptr();
    auto tc = target;
    tape->record({oi}, [pi, oi, tc, n] {
      if (!pi->needs_grad) return;
      pi->ensure_grad();
      float g = oi->grad[0] * 2.f / static_cast<float>(n);
      for (int64_t i = 0; i < n; i++)
        pi->grad[i] += g * (pi->data[i] - tc[static_cast<size_t>(i)]);
    });
  }
  return out;
}

// ---- fused attention ----

namespace {
struct AttnSaved {
  // Per (segment, head): softmax probabilities, row-major [L x (prefix+L)].
  std::vector<std::vector<float>> probs;
  AttnPrefix prefix;          // copied; empty offsets means no prefix
  std::vector<uint8_t> key_valid;  // copied; empty means all valid
  std::vector<int> seg;
  int heads = 1;
  bool causal = false;
};
}  // namespace

Tensor attention(Tape* tape, const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttnArgs& args) {
  if (q.rank() != 2 || k.shape() != q.shape() || v.shape() != q.shape())
    throw DimensionError("attention: q/k/v must share shape, got " +
                         shape_str(q.shape()) + "/" + shape_str(k.shape()) + "/" +
                         shape_str(v.shape()));
  const int T = q.dim(0), d = q.dim(1), H = args.heads;
  if (H < 1 || d % H != 0)
    throw ContractError("attention: dim " + std::to_string(d) +
                        " not divisible by heads " + std::to_string(H));
  const int dh = d / H;
  const std::vector<int>& seg = args.seg_offsets;
  if (seg.size() < 2 || seg.front() != 0 || seg.back() != T)
    throw ContractError("attention: segment offsets must cover all rows");
  const bool has_prefix = args.prefix != nullptr && !args.prefix->offsets.empty();
  if (has_prefix && args.prefix->offsets.size() != seg.size())
    throw ContractError("attention: prefix offsets must match segment count");
  if (args.key_valid && static_cast<int>(args.key_valid->size()) != T)
    throw ContractError("attention: key_valid length mismatch");

  const float inv_sqrt = 1.f / std::sqrt(static_cast<float>(dh));
  Tensor out = make_out(tape, q.shape(), {&q, &k, &v});
  const bool rec = recording(tape, out);
  auto saved = std::make_shared<AttnSaved>();
  if (rec) {
    saved->heads = H;
    saved->causal = args.causal;
    saved->seg = seg;
    if (has_prefix) saved->prefix = *args.prefix;
    if (args.key_valid) saved->key_valid = *args.key_valid;
    saved->probs.resize((seg.size() - 1) * static_cast<size_t>(H));
  }

  const int S = static_cast<int>(seg.size()) - 1;
  std::vector<float> qh, kh, vh, sc;
  for (int s = 0; s < S; s++) {
    const int r0 = seg[static_cast<size_t>(s)], r1 = seg[static_cast<size_t>(s) + 1];
    const int L = r1 - r0;
    if (L <= 0) throw ContractError("attention: empty segment");
    int pn = 0, p0 = 0;
    if (has_prefix) {
      p0 = args.prefix->offsets[static_cast<size_t>(s)];
      pn = args.prefix->offsets[static_cast<size_t>(s) + 1] - p0;
    }
    const int M = pn + L;
    for (int h = 0; h < H; h++) {
      const int c0 = h * dh;
      qh.resize(static_cast<size_t>(L) * dh);
      kh.resize(static_cast<size_t>(M) * dh);
      vh.resize(static_cast<size_t>(M) * dh);
      for (int i = 0; i < L; i++)
        std::memcpy(&qh[static_cast<size_t>(i) * dh], q.data() + static_cast<int64_t>(r0 + i) * d + c0,
                    sizeof(float) * static_cast<size_t>(dh));
      for (int j = 0; j < pn; j++) {
        std::memcpy(&kh[static_cast<size_t>(j) * dh],
                    &args.prefix->k[static_cast<size_t>(p0 + j) * d + static_cast<size_t>(c0)],
                    sizeof(float) * static_cast<size_t>(dh));
        std::memcpy(&vh[static_cast<size_t>(j) * dh],
                    &args.prefix->v[static_cast<size_t>(p0 + j) * d + static_cast<size_t>(c0)],
                    sizeof(float) * static_cast<size_t>(dh));
      }
      for (int j = 0; j < L; j++) {
        std::memcpy(&kh[static_cast<size_t>(pn + j) * dh], k.data() + static_cast<int64_t>(r0 + j) * d + c0,
                    sizeof(float) * static_cast<size_t>(dh));
        std::memcpy(&vh[static_cast<size_t>(pn + j) * dh], v.data() + static_cast<int64_t>(r0 + j) * d + c0,
                    sizeof(float) * static_cast<size_t>(dh));
      }
      sc.resize(static_cast<size_t>(L) * M);
      {
        CMap Q(qh.data(), L, dh), K(kh.data(), M, dh);
        MMap Sc(sc.data(), L, M);
        Sc.noalias() = Q * K.transpose() * inv_sqrt;
      }
      // softmax with causal/validity masking
      for (int i = 0; i < L; i++) {
        float* row = &sc[static_cast<size_t>(i) * M];
        const int limit = args.causal ? pn + i + 1 : M;
        double z = 0.0;
        float m = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < limit; j++) {
          if (j >= pn && args.key_valid && !(*args.key_valid)[static_cast<size_t>(r0 + j - pn)])
            continue;
          m = std::max(m, row[j]);
        }
        if (!std::isfinite(m))
          throw ContractError("attention: query row with no valid keys");
        for (int j = 0; j < M; j++) {
          bool ok = j < limit &&
                    !(j >= pn && args.key_valid && !(*args.key_valid)[static_cast<size_t>(r0 + j - pn)]);
          if (ok) {
            double e = std::exp(static_cast<double>(row[j] - m));
            row[j] = static_cast<float>(e);
            z += e;
          } else {
            row[j] = 0.f;
          }
        }
        float invz = static_cast<float>(1.0 / z);
        for (int j = 0; j < M; j++) row[j] *= invz;
      }
      // out rows
      {
        CMap P(sc.data(), L, M), V(vh.data(), M, dh);
        EMat O = P * V;
        for (int i = 0; i < L; i++)
          std::memcpy(out.data() + static_cast<int64_t>(r0 + i) * d + c0, O.data() + static_cast<int64_t>(i) * dh,
                      sizeof(float) * static_cast<size_t>(dh));
      }
      if (rec) saved->probs[static_cast<size_t>(s) * H + static_cast<size_t>(h)] = sc;
    }
  }

  if (rec) {
    auto qi = q.ptr(), ki = k.ptr(), vi = v.ptr(), oi = out.ptr();
    tape->record({oi}, [qi, ki, vi, oi, saved, T, d, dh, inv_sqrt] {
      const int H = saved->heads;
      const auto& seg = saved->seg;
      const int S = static_cast<int>(seg.size()) - 1;
      const bool has_prefix = !saved->prefix.offsets.empty();
      if (qi->needs_grad) qi->ensure_grad();
      if (ki->needs_grad) ki->ensure_grad();
      if (vi->needs_grad) vi->ensure_grad();
      std::vector<float> kh, vh, qh, doh, dsc;
      for (int s = 0; s < S; s++) {
        const int r0 = seg[static_cast<size_t>(s)], r1 = seg[static_cast<size_t>(s) + 1];
        const int L = r1 - r0;
        int pn = 0, p0 = 0;
        if (has_prefix) {
          p0 = saved->prefix.offsets[static_cast<size_t>(s)];
          pn = saved->prefix.offsets[static_cast<size_t>(s) + 1] - p0;
        }
        const int M = pn + L;
        for (int h = 0; h < H; h++) {
          const int c0 = h * dh;
          const auto& pr = saved->probs[static_cast<size_t>(s) * H + static_cast<size_t>(h)];
          qh.resize(static_cast<size_t>(L) * dh);
          kh.resize(static_cast<size_t>(M) * dh);
          vh.resize(static_cast<size_t>(M) * dh);
          doh.resize(static_cast<size_t>(L) * dh);
          for (int i = 0; i < L; i++) {
            std::memcpy(&qh[static_cast<size_t>(i) * dh], qi->data.data() + static_cast<int64_t>(r0 + i) * d + c0,
                        sizeof(float) * static_cast<size_t>(dh));
            std::memcpy(&doh[static_cast<size_t>(i) * dh], oi->grad.data() + static_cast<int64_t>(r0 + i) * d + c0,
                        sizeof(float) * static_cast<size_t>(dh));
          }
          for (int j = 0; j < pn; j++) {
            std::memcpy(&kh[static_cast<size_t>(j) * dh],
                        &saved->prefix.k[static_cast<size_t>(p0 + j) * d + static_cast<size_t>(c0)],
                        sizeof(float) * static_cast<size_t>(dh));
            std::memcpy(&vh[static_cast<size_t>(j) * dh],
                        &saved->prefix.v[static_cast<size_t>(p0 + j) * d + static_cast<size_t>(c0)],
                        sizeof(float) * static_cast<size_t>(dh));
          }
          for (int j = 0; j < L; j++) {
            std::memcpy(&kh[static_cast<size_t>(pn + j) * dh], ki->data.data() + static_cast<int64_t>(r0 + j) * d + c0,
                        sizeof(float) * static_cast<size_t>(dh));
            std::memcpy(&vh[static_cast<size_t>(pn + j) * dh], vi->data.data() + static_cast<int64_t>(r0 + j) * d + c0,
                        sizeof(float) * static_cast<size_t>(dh));
          }
          CMap P(pr.data(), L, M), dO(doh.data(), L, dh), K(kh.data(), M, dh),
              V(vh.data(), M, dh), Q(qh.data(), L, dh);
          if (vi->needs_grad) {
            EMat dV = P.transpose() * dO;  // [M x dh]; prefix rows discarded
            for (int j = 0; j < L; j++) {
              float* dst = vi->grad.data() + static_cast<int64_t>(r0 + j) * d + c0;
              const float* src = dV.data() + static_cast<int64_t>(pn + j) * dh;
              for (int c = 0; c < dh; c++) dst[c] += src[c];
            }
          }
          if (qi->needs_grad || ki->needs_grad) {
            EMat dP = dO * V.transpose();  // [L x M]
            dsc.resize(static_cast<size_t>(L) * M);
            MMap dS(dsc.data(), L, M);
            for (int i = 0; i < L; i++) {
              double dot = 0.0;
              const float* prow = pr.data() + static_cast<size_t>(i) * M;
              for (int j = 0; j < M; j++) dot += static_cast<double>(dP(i, j)) * prow[j];
              for (int j = 0; j < M; j++)
                dS(i, j) = prow[j] * (dP(i, j) - static_cast<float>(dot));
            }
            if (qi->needs_grad) {
              EMat dQ = dS * K * inv_sqrt;  // [L x dh]
              for (int i = 0; i < L; i++) {
                float* dst = qi->grad.data() + static_cast<int64_t>(r0 + i) * d + c0;
                const float* src = dQ.data() + static_cast<int64_t>(i) * dh;
                for (int c = 0; c < dh; c++) dst[c] += src[c];
              }
            }
            if (ki->needs_grad) {
              EMat dK = dS.transpose() * Q * inv_sqrt;  // [M x dh]; prefix rows discarded
              for (int j = 0; j < L; j++) {
                float* dst = ki->grad.data() + static_cast<int64_t>(r0 + j) * d + c0;
                const float* src = dK.data() + static_cast<int64_t>(pn + j) * dh;
                for (int c = 0; c < dh; c++) dst[c] += src[c];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace flare::grad
