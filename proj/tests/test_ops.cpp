#include <doctest.h>

#include <cmath>

#include "flare/error.hpp"
#include "flare/grad/ops.hpp"
#include "flare/grad/tape.hpp"
#include "oracles/fd_checks.hpp"
#include "oracles/ref_ops.hpp"

using namespace flare;
using namespace flare::grad;

TEST_CASE("matmul identity leaves the matrix unchanged") {
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {3.5f, -1, 2, 7});
  Tensor out = matmul(nullptr, id, m);
  for (int i = 0; i < 4; i++) CHECK(out.at(i) == doctest::Approx(m.at(i)));
}

TEST_CASE("matmul hand-expanded 2x2 by 2x1") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {5, 6});
  Tensor c = matmul(nullptr, a, b);
  CHECK(c.at(0) == doctest::Approx(17));
  CHECK(c.at(1) == doctest::Approx(39));
}

TEST_CASE("matmul rejects mismatched inner dims naming both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(nullptr, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor x = Tensor::from({1, 4}, {2, 2, 2, 2});
  Tensor y = softmax(nullptr, x);
  for (int i = 0; i < 4; i++) CHECK(y.at(i) == doctest::Approx(0.25));
}

TEST_CASE("softmax closed form [0, ln3]") {
  Tensor x = Tensor::from({1, 2}, {0.f, std::log(3.f)});
  Tensor y = softmax(nullptr, x);
  CHECK(y.at(0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(y.at(1) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax is invariant to constant shifts") {
  Rng rng(4);
  std::vector<float> base(8);
  for (auto& v : base) v = rng.normal();
  std::vector<float> shifted = base;
  for (auto& v : shifted) v += 37.5f;
  Tensor y0 = softmax(nullptr, Tensor::from({1, 8}, base));
  Tensor y1 = softmax(nullptr, Tensor::from({1, 8}, shifted));
  for (int i = 0; i < 8; i++) CHECK(y0.at(i) == doctest::Approx(y1.at(i)).epsilon(1e-5));
}

TEST_CASE("softmax rejects non-finite input") {
  Tensor x = Tensor::from({1, 3}, {1.f, std::numeric_limits<float>::infinity(), 0.f});
  CHECK_THROWS_AS(softmax(nullptr, x), NumericError);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(9);
  Tensor x = Tensor::randn({5, 11}, rng, 3.f);
  Tensor y = softmax(nullptr, x);
  for (int r = 0; r < 5; r++) {
    double s = 0;
    for (int j = 0; j < 11; j++) s += y.at(r * 11 + j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("layer_norm of a constant vector is the affine of zeros") {
  Tensor x = Tensor::from({1, 4}, {3, 3, 3, 3});
  Tensor g = Tensor::from({4}, {2, 2, 2, 2});
  Tensor b = Tensor::from({4}, {0.5f, 0.5f, 0.5f, 0.5f});
  Tensor y = layer_norm(nullptr, x, g, b);
  for (int i = 0; i < 4; i++) CHECK(y.at(i) == doctest::Approx(0.5));
}

TEST_CASE("layer_norm [1,3] with unit gain is [-1,1] up to epsilon") {
  Tensor x = Tensor::from({1, 2}, {1, 3});
  Tensor g = Tensor::from({2}, {1, 1});
  Tensor b = Tensor::from({2}, {0, 0});
  Tensor y = layer_norm(nullptr, x, g, b);
  CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm statistics on random vectors") {
  Rng rng(7);
  const int R = 20, d = 32;
  Tensor x = Tensor::randn({R, d}, rng, 2.f);
  Tensor g = Tensor::full({d}, 1.f);
  Tensor b = Tensor::zeros({d});
  Tensor y = layer_norm(nullptr, x, g, b);
  for (int r = 0; r < R; r++) {
    double mean = 0, var = 0;
    for (int j = 0; j < d; j++) mean += y.at(r * d + j);
    mean /= d;
    for (int j = 0; j < d; j++) {
      double c = y.at(r * d + j) - mean;
      var += c * c;
    }
    var /= d;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("cross_entropy of uniform logits is ln(n)") {
  Tensor x = Tensor::zeros({3, 4});
  Tensor loss = cross_entropy(nullptr, x, {0, 1, 3});
  CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("cross_entropy goes to zero with growing margin") {
  double prev = 1e9;
  for (float margin : {2.f, 5.f, 10.f, 20.f}) {
    Tensor x = Tensor::from({1, 3}, {margin, 0, 0});
    double l = cross_entropy(nullptr, x, {0}).item64();
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("cross_entropy gradient equals (softmax - onehot)/B") {
  Rng rng(12);
  const int B = 4, n = 6;
  Tensor x = Tensor::randn({B, n}, rng, 1.f, true);
  std::vector<int> t = {2, 0, 5, 1};
  Tape tape;
  Tensor loss = cross_entropy(&tape, x, t);
  tape.backward(loss);
  Tensor p = softmax(nullptr, x);
  for (int r = 0; r < B; r++)
    for (int j = 0; j < n; j++) {
      float expect = (p.at(r * n + j) - (t[static_cast<size_t>(r)] == j ? 1.f : 0.f)) / B;
      CHECK(x.grad()[r * n + j] == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("cross_entropy rejects out-of-range targets") {
  Tensor x = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(cross_entropy(nullptr, x, {0, 3}), ContractError);
  CHECK_THROWS_AS(cross_entropy(nullptr, x, {-1, 0}), ContractError);
}

TEST_CASE("attention respects segment boundaries") {
  // Two segments; change segment 1's content, segment 2's output must not move.
  Rng rng(21);
  const int T = 6, d = 4;
  Tensor k = Tensor::randn({T, d}, rng, 1.f);
  Tensor v = Tensor::randn({T, d}, rng, 1.f);
  Tensor q = Tensor::randn({T, d}, rng, 1.f);
  AttnArgs args;
  args.heads = 2;
  args.seg_offsets = {0, 3, 6};
  Tensor out1 = attention(nullptr, q, k, v, args);
  for (int i = 0; i < 3 * d; i++) {
    k.data()[i] += 1.5f;
    v.data()[i] -= 0.5f;
  }
  Tensor out2 = attention(nullptr, q, k, v, args);
  for (int i = 3 * d; i < T * d; i++) CHECK(out1.at(i) == doctest::Approx(out2.at(i)));
  bool seg1_changed = false;
  for (int i = 0; i < 3 * d; i++)
    if (out1.at(i) != out2.at(i)) seg1_changed = true;
  CHECK(seg1_changed);
}

TEST_CASE("causal attention ignores future rows") {
  Rng rng(22);
  const int T = 5, d = 4;
  Tensor q = Tensor::randn({T, d}, rng, 1.f);
  Tensor k = Tensor::randn({T, d}, rng, 1.f);
  Tensor v = Tensor::randn({T, d}, rng, 1.f);
  AttnArgs args;
  args.heads = 1;
  args.causal = true;
  args.seg_offsets = {0, T};
  Tensor out1 = attention(nullptr, q, k, v, args);
  // Perturb the last row; outputs for rows 0..T-2 must be identical.
  for (int c = 0; c < d; c++) {
    k.data()[(T - 1) * d + c] += 2.f;
    v.data()[(T - 1) * d + c] += 2.f;
  }
  Tensor out2 = attention(nullptr, q, k, v, args);
  for (int i = 0; i < (T - 1) * d; i++) CHECK(out1.at(i) == doctest::Approx(out2.at(i)));
}

TEST_CASE("attention key_valid mask excludes rows entirely") {
  Rng rng(23);
  const int T = 4, d = 4;
  Tensor q = Tensor::randn({T, d}, rng, 1.f);
  Tensor k = Tensor::randn({T, d}, rng, 1.f);
  Tensor v = Tensor::randn({T, d}, rng, 1.f);
  std::vector<uint8_t> mask = {1, 0, 1, 1};
  AttnArgs args;
  args.heads = 2;
  args.seg_offsets = {0, T};
  args.key_valid = &mask;
  Tensor out1 = attention(nullptr, q, k, v, args);
  for (int c = 0; c < d; c++) {
    k.data()[1 * d + c] = 99.f;
    v.data()[1 * d + c] = -99.f;
  }
  Tensor out2 = attention(nullptr, q, k, v, args);
  for (int i = 0; i < T * d; i++) CHECK(out1.at(i) == doctest::Approx(out2.at(i)));
}

TEST_CASE("attention values match the double-precision reference") {
  Rng rng(24);
  const int T = 9, d = 8, H = 2;
  std::vector<float> qv(T * d), kv(T * d), vv(T * d);
  for (auto* vec : {&qv, &kv, &vv})
    for (auto& x : *vec) x = rng.normal();
  AttnArgs args;
  args.heads = H;
  args.causal = true;
  args.seg_offsets = {0, 4, 9};
  Tensor out = attention(nullptr, Tensor::from({T, d}, qv), Tensor::from({T, d}, kv),
                         Tensor::from({T, d}, vv), args);
  auto ref = refops::attention(fdcheck::to_d(qv), fdcheck::to_d(kv), fdcheck::to_d(vv),
                               T, d, H, true, args.seg_offsets, nullptr, nullptr);
  for (int i = 0; i < T * d; i++)
    CHECK(out.at(i) == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-5));
}

TEST_CASE("all finite-difference gradient checks pass below 1e-4") {
  auto res = fdcheck::run_all();
  INFO("worst: ", res.worst, " rel ", res.max_rel, " over ", res.checks, " checks");
  CHECK(res.checks > 500);
  CHECK(res.max_rel < 1e-4);
}
