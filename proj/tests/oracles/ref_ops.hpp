#pragma once

// Independent double-precision reference implementations used as oracles.
// Deliberately naive: straight loops, no reuse of library code. Finite
// differences are taken against these, so the analytic gradients of the
// float32 engine are compared to near-exact values.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace refops {

using dvec = std::vector<double>;

inline dvec matmul(const dvec& a, int m, int k, const dvec& b, int n) {
  dvec c(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; i++)
    for (int p = 0; p < k; p++)
      for (int j = 0; j < n; j++)
        c[static_cast<size_t>(i) * n + j] += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
  return c;
}

inline dvec softmax_rows(const dvec& x, int rows, int n) {
  dvec y(x.size());
  for (int r = 0; r < rows; r++) {
    const double* xr = &x[static_cast<size_t>(r) * n];
    double m = xr[0];
    for (int j = 1; j < n; j++) m = std::max(m, xr[j]);
    double z = 0;
    for (int j = 0; j < n; j++) z += std::exp(xr[j] - m);
    for (int j = 0; j < n; j++) y[static_cast<size_t>(r) * n + j] = std::exp(xr[j] - m) / z;
  }
  return y;
}

inline dvec log_softmax_rows(const dvec& x, int rows, int n) {
  dvec y(x.size());
  for (int r = 0; r < rows; r++) {
    const double* xr = &x[static_cast<size_t>(r) * n];
    double m = xr[0];
    for (int j = 1; j < n; j++) m = std::max(m, xr[j]);
    double z = 0;
    for (int j = 0; j < n; j++) z += std::exp(xr[j] - m);
    double lse = m + std::log(z);
    for (int j = 0; j < n; j++) y[static_cast<size_t>(r) * n + j] = xr[j] - lse;
  }
  return y;
}

inline dvec layer_norm(const dvec& x, int rows, int d, const dvec& g, const dvec& b) {
  dvec y(x.size());
  for (int r = 0; r < rows; r++) {
    const double* xr = &x[static_cast<size_t>(r) * d];
    double mean = 0;
    for (int j = 0; j < d; j++) mean += xr[j];
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; j++) var += (xr[j] - mean) * (xr[j] - mean);
    var /= d;
    double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int j = 0; j < d; j++)
      y[static_cast<size_t>(r) * d + j] = (xr[j] - mean) * inv * g[static_cast<size_t>(j)] + b[static_cast<size_t>(j)];
  }
  return y;
}

inline double cross_entropy(const dvec& logits, int batch, int n, const std::vector<int>& t) {
  double total = 0;
  for (int r = 0; r < batch; r++) {
    const double* xr = &logits[static_cast<size_t>(r) * n];
    double m = xr[0];
    for (int j = 1; j < n; j++) m = std::max(m, xr[j]);
    double z = 0;
    for (int j = 0; j < n; j++) z += std::exp(xr[j] - m);
    total += m + std::log(z) - xr[static_cast<size_t>(t[static_cast<size_t>(r)])];
  }
  return total / batch;
}

inline dvec gelu(const dvec& x) {
  dvec y(x.size());
  for (size_t i = 0; i < x.size(); i++)
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
  return y;
}

// Mirrors the fused op's semantics: per-segment blocks, optional causal mask,
// optional per-key validity over segment rows, optional constant prefix rows.
struct RefAttnPrefix {
  std::vector<int> offsets;
  dvec k, v;
};

inline dvec attention(const dvec& q, const dvec& k, const dvec& v, int T, int d,
                      int heads, bool causal, const std::vector<int>& seg,
                      const std::vector<uint8_t>* key_valid,
                      const RefAttnPrefix* prefix) {
  const int dh = d / heads;
  dvec out(static_cast<size_t>(T) * d, 0.0);
  for (size_t s = 0; s + 1 < seg.size(); s++) {
    int r0 = seg[s], r1 = seg[s + 1];
    int pn = 0, p0 = 0;
    if (prefix && !prefix->offsets.empty()) {
      p0 = prefix->offsets[s];
      pn = prefix->offsets[s + 1] - p0;
    }
    for (int h = 0; h < heads; h++) {
      int c0 = h * dh;
      for (int i = r0; i < r1; i++) {
        int local = i - r0;
        int M = pn + (r1 - r0);
        dvec score(static_cast<size_t>(M), -std::numeric_limits<double>::infinity());
        for (int j = 0; j < M; j++) {
          if (causal && j >= pn + local + 1) continue;
          if (j >= pn && key_valid && !(*key_valid)[static_cast<size_t>(r0 + j - pn)]) continue;
          double dot = 0;
          for (int c = 0; c < dh; c++) {
            double kv = j < pn ? prefix->k[static_cast<size_t>(p0 + j) * d + c0 + c]
                               : k[static_cast<size_t>(r0 + j - pn) * d + c0 + c];
            dot += q[static_cast<size_t>(i) * d + c0 + c] * kv;
          }
          score[static_cast<size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
        }
        double m = -std::numeric_limits<double>::infinity();
        for (double sc : score) m = std::max(m, sc);
        if (!std::isfinite(m)) throw std::runtime_error("ref attention: no valid keys");
        double z = 0;
        for (double sc : score)
          if (std::isfinite(sc)) z += std::exp(sc - m);
        for (int j = 0; j < M; j++) {
          if (!std::isfinite(score[static_cast<size_t>(j)])) continue;
          double p = std::exp(score[static_cast<size_t>(j)] - m) / z;
          for (int c = 0; c < dh; c++) {
            double vv = j < pn ? prefix->v[static_cast<size_t>(p0 + j) * d + c0 + c]
                               : v[static_cast<size_t>(r0 + j - pn) * d + c0 + c];
            out[static_cast<size_t>(i) * d + c0 + c] += p * vv;
          }
        }
      }
    }
  }
  return out;
}

// Central finite differences of f over x, h = 1e-3.
inline dvec finite_diff(std::function<double(const dvec&)> f, dvec x, double h = 1e-3) {
  dvec g(x.size());
  for (size_t i = 0; i < x.size(); i++) {
    double keep = x[i];
    x[i] = keep + h;
    double fp = f(x);
    x[i] = keep - h;
    double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// Relative error with a floor so near-zero gradients are compared absolutely.
inline double rel_err(double a, double b, double floor_ = 0.1) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_});
}

}  // namespace refops
