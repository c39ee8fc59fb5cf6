#include <cmath>
#include <numbers>

#include "delnet/error.hpp"
#include "delnet/ops.hpp"
#include "delnet/optim.hpp"
#include "delnet/random.hpp"
#include "delnet/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace delnet;
using delnet::testing::gradcheck;
using delnet::testing::random_tensor;

TEST_CASE("tensor construction checks shape and finiteness") {
  auto t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {INFINITY}), NumericError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
}

TEST_CASE("grad buffer exists exactly when requires_grad is set") {
  auto t = Tensor::zeros({3});
  CHECK_FALSE(t.requires_grad());
  CHECK_THROWS(t.grad());
  t.set_requires_grad(true);
  CHECK(t.grad().size() == 3);
}

TEST_CASE("conv2d scalar product") {
  auto x = Tensor::from_data({1, 1, 1, 1}, {2.0});
  auto k = Tensor::from_data({1, 1, 1, 1}, {3.0});
  CHECK(conv2d(x, k, Tensor{}, Padding::Same).item() == 6.0);
}

TEST_CASE("conv2d valid 3x3 window sums to 9") {
  auto x = Tensor::full({1, 1, 3, 3}, 1.0);
  auto k = Tensor::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, k, Tensor{}, Padding::Valid);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 9.0);
}

TEST_CASE("conv2d same padding keeps extents and zero-pads borders") {
  auto x = Tensor::full({1, 1, 3, 3}, 1.0);
  auto k = Tensor::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, k, Tensor{}, Padding::Same);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at(0) == 4.0);  // corner sees a 2x2 patch
  CHECK(y.at(1) == 6.0);
  CHECK(y.at(4) == 9.0);
}

TEST_CASE("conv2d rejects mismatched channels and unsupported kernels") {
  auto x = Tensor::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 3, 3}), Tensor{}, Padding::Same), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 5, 5}), Tensor{}, Padding::Same), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({2}), Padding::Same),
                  ShapeError);
}

TEST_CASE("conv2d gradient on 1x4x8x8 input with 8x4x3x3 kernel") {
  CounterRng rng(11, 0);
  auto x = random_tensor({1, 4, 8, 8}, rng);
  auto k = random_tensor({8, 4, 3, 3}, rng);
  auto w = random_tensor({1, 8, 8, 8}, rng, -1, 1, 0, false);
  auto r = gradcheck([&](const auto& in) { return sum(mul(conv2d(in[0], in[1], Tensor{}, Padding::Same), w)); },
                     {x, k});
  CHECK(r.max_error < 1e-6);
  CHECK(r.entries == 256 + 288);
}

TEST_CASE("instance_norm of a constant channel is zero") {
  auto y = instance_norm(Tensor::full({1, 1, 2, 2}, 5.0));
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("instance_norm of [1, 3] is about [-1, 1]") {
  auto y = instance_norm(Tensor::from_data({1, 1, 1, 2}, {1.0, 3.0}));
  CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-4));
  // exact value with the eps term: ±1/sqrt(1 + 1e-5)
  CHECK(std::abs(y.at(1) - 1.0 / std::sqrt(1.0 + 1e-5)) < 1e-15);
}

TEST_CASE("instance_norm output has zero mean and unit variance per channel") {
  CounterRng rng(3, 0);
  auto x = random_tensor({2, 3, 5, 5}, rng, -4, 4, 0, false);
  auto y = instance_norm(x, 0.0 + 1e-12);
  for (std::size_t c = 0; c < 6; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 25; ++i) m += y.at(c * 25 + i);
    m /= 25;
    for (std::size_t i = 0; i < 25; ++i) v += (y.at(c * 25 + i) - m) * (y.at(c * 25 + i) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v / 25 - 1.0) < 1e-9);
  }
}

TEST_CASE("relu values and gradients") {
  auto neg = Tensor::scalar(-1.0, true);
  auto y = relu(neg);
  CHECK(y.item() == 0.0);
  y.backward();
  CHECK(neg.grad()[0] == 0.0);

  auto pos = Tensor::scalar(2.0, true);
  auto z = relu(pos);
  CHECK(z.item() == 2.0);
  z.backward();
  CHECK(pos.grad()[0] == 1.0);
}

TEST_CASE("abs_sum") {
  CHECK(abs_sum(Tensor::from_data({3}, {1, -2, 3})).item() == 6.0);
}

TEST_CASE("elementwise ops broadcast only against single-element tensors") {
  auto a = Tensor::from_data({2}, {1, 2});
  CHECK(add(a, Tensor::scalar(1)).at(1) == 3.0);
  CHECK(mul(Tensor::scalar(2), a).at(1) == 4.0);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(div(a, Tensor::zeros({2})), NumericError);
}

TEST_CASE("backward accumulates into leaves and resets interior nodes") {
  auto x = Tensor::scalar(3.0, true);
  auto y = mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == 6.0);
  y.backward();
  CHECK(x.grad()[0] == 12.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward requires a scalar") {
  auto x = Tensor::zeros({2}, true);
  CHECK_THROWS(scale(x, 2.0).backward());
}

TEST_CASE("forward passes are bit-identical across repeats") {
  CounterRng rng(5, 0);
  auto x = random_tensor({2, 3, 6, 6}, rng);
  auto k = random_tensor({4, 3, 3, 3}, rng);
  auto a = instance_norm(conv2d(x, k, Tensor{}, Padding::Same));
  auto b = instance_norm(conv2d(x, k, Tensor{}, Padding::Same));
  CHECK(a.bit_equal(b));
}

TEST_CASE("gradient suite on a few random instances") {
  for (const auto& row : delnet::testing::run_gradient_suite(3, 99)) {
    INFO(row.name);
    CHECK(row.max_error < 1e-6);
  }
}

TEST_CASE("cosine schedule endpoints and monotonicity") {
  CHECK(cosine_lr(2e-4, 0, 100) == 2e-4);
  CHECK(cosine_lr(2e-4, 100, 100) == 0.0);
  CHECK(cosine_lr(2e-4, 50, 100) == doctest::Approx(1e-4).epsilon(1e-12));
  double prev = 1.0;
  for (int s = 0; s <= 100; ++s) {
    const double lr = cosine_lr(2e-4, s, 100);
    CHECK(lr <= prev);
    CHECK(lr >= 0.0);
    CHECK(lr <= 2e-4);
    prev = lr;
  }
}

TEST_CASE("adam first step moves a scalar by lr against the gradient") {
  auto p = Tensor::scalar(1.0, true);
  Adam opt({p}, 100);
  CHECK(opt.current_lr() == 2e-4);
  p.mutable_grad()[0] = 1.0;
  opt.step();
  CHECK(p.item() < 1.0);
  // bias-corrected first step: m̂ = g, v̂ = g², update = lr·g/(|g| + eps)
  CHECK(p.item() == doctest::Approx(1.0 - 2e-4 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(opt.step_count() == 1);
  CHECK(p.grad()[0] == 1.0);  // cleared only by zero_grad
  opt.zero_grad();
  CHECK(p.grad()[0] == 0.0);
}

TEST_CASE("adam at step == total leaves parameters unchanged") {
  auto p = Tensor::scalar(1.0, true);
  Adam opt({p}, 1);
  p.mutable_grad()[0] = 1.0;
  opt.step();
  const double after_first = p.item();
  p.mutable_grad()[0] = 1.0;
  opt.step();
  CHECK(p.item() == after_first);
}

TEST_CASE("adam rejects parameters without gradients") {
  auto p = Tensor::scalar(1.0);
  Adam opt({p}, 10);
  CHECK_THROWS(opt.step());
}

TEST_CASE("counter rng draws are a pure function of position") {
  CounterRng a(42, 7), b(42, 7, 3);
  for (int i = 0; i < 3; ++i) a.next_u64();
  CHECK(a.next_u64() == b.next_u64());
  CounterRng c(42, 8);
  CHECK(CounterRng(42, 7).next_u64() != c.next_u64());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = a.integer(2, 4);
    CHECK(k >= 2);
    CHECK(k <= 4);
  }
}
