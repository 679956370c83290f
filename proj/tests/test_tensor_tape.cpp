#include <doctest.h>

#include "flare/error.hpp"
#include "flare/grad/ops.hpp"
#include "flare/grad/tape.hpp"
#include "flare/grad/tensor.hpp"

using namespace flare;
using namespace flare::grad;

TEST_CASE("tensor data length must match shape") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3, 4, 5}), DimensionError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
}

TEST_CASE("grad storage allocated iff requires_grad") {
  Tensor a = Tensor::zeros({4});
  CHECK_FALSE(a.has_grad());
  Tensor b = Tensor::zeros({4}, true);
  CHECK(b.has_grad());
  CHECK(b.requires_grad());
  a.set_requires_grad(true);
  CHECK(a.has_grad());
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Tape tape;
  Tensor x = Tensor::from({3}, {5, -2, 7}, true);
  Tensor loss = sum_all(&tape, x);
  tape.backward(loss);
  for (int i = 0; i < 3; i++) CHECK(x.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("backward of sum(x*x) at [1,2,3] gives [2,4,6]") {
  Tape tape;
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tensor loss = sum_all(&tape, mul(&tape, x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("two backward calls double leaf gradients") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor loss = sum_all(&tape, mul(&tape, x, x));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("backward rejects non-scalar loss and off-tape tensors") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  Tensor stray = Tensor::scalar(1.f);
  CHECK_THROWS_AS(tape.backward(stray), ContractError);
}

TEST_CASE("no tape means no recording and no grad flow") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = mul(nullptr, x, x);
  CHECK_FALSE(y.needs_grad());
  CHECK(y.at(0) == doctest::Approx(1.0));
  CHECK(y.at(1) == doctest::Approx(4.0));
}

TEST_CASE("gradient accumulates across two uses of one tensor") {
  Tape tape;
  Tensor x = Tensor::from({2}, {3, 4}, true);
  // loss = sum(x) + sum(x*x): dx = 1 + 2x
  Tensor loss = add(&tape, sum_all(&tape, x), sum_all(&tape, mul(&tape, x, x)));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
  CHECK(x.grad()[1] == doctest::Approx(9.0));
}

TEST_CASE("tape replay is bit-deterministic") {
  auto run = [] {
    Rng rng(11);
    Tape tape;
    Tensor x = Tensor::randn({4, 4}, rng, 1.f, true);
    Tensor w = Tensor::randn({4, 4}, rng, 1.f, true);
    Tensor loss = mean_all(&tape, gelu(&tape, matmul(&tape, x, w)));
    tape.backward(loss);
    std::vector<float> out;
    out.push_back(loss.item());
    for (int i = 0; i < 16; i++) out.push_back(x.grad()[i]);
    for (int i = 0; i < 16; i++) out.push_back(w.grad()[i]);
    return out;
  };
  CHECK(run() == run());
}
