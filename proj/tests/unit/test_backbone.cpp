#include "delnet/backbone.hpp"
#include "delnet/error.hpp"
#include "delnet/ops.hpp"
#include "delnet/optim.hpp"
#include "delnet/synth.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace delnet;

TEST_CASE("zero image with zero biases encodes to zero features") {
  MiniBackbone bb(16, 3);
  auto f = bb.encode(Tensor::zeros({1, 3, 8, 8}));
  CHECK(f.shape() == Shape{1, 16, 8, 8});
  for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("decode of zero features is the input image exactly") {
  MiniBackbone bb(16, 3);
  CounterRng rng(4, 0);
  auto img = delnet::testing::random_tensor({2, 3, 32, 32}, rng, 0, 1, 0, false);
  auto out = bb.decode(Tensor::zeros({2, 16, 32, 32}), img);
  CHECK(out.bit_equal(img));
  CHECK(out.shape() == img.shape());
}

TEST_CASE("encode is deterministic for a fixed seed") {
  CounterRng rng(5, 0);
  auto img = delnet::testing::random_tensor({1, 3, 16, 16}, rng, 0, 1, 0, false);
  CHECK(MiniBackbone(16, 9).encode(img).bit_equal(MiniBackbone(16, 9).encode(img)));
  CHECK_FALSE(MiniBackbone(16, 9).encode(img).bit_equal(MiniBackbone(16, 10).encode(img)));
}

TEST_CASE("shape errors") {
  MiniBackbone bb(8, 1);
  CHECK_THROWS_AS(bb.encode(Tensor::zeros({1, 4, 8, 8})), ShapeError);
  CHECK_THROWS_AS(bb.decode(Tensor::zeros({1, 8, 8, 8}), Tensor::zeros({1, 3, 4, 4})), ShapeError);
  CHECK_THROWS_AS(bb.decode(Tensor::zeros({1, 4, 8, 8}), Tensor::zeros({1, 3, 8, 8})), ShapeError);
}

TEST_CASE("frozen copy does not track gradients and shares no storage") {
  MiniBackbone bb(8, 1);
  auto frozen = bb.frozen_copy();
  for (const auto& p : frozen.parameters()) CHECK_FALSE(p.requires_grad());
  for (std::size_t i = 0; i < 5; ++i) CHECK(frozen.parameters()[i].bit_equal(bb.parameters()[i]));
  bb.parameters()[0].mutable_data()[0] += 1.0;
  CHECK_FALSE(frozen.parameters()[0].bit_equal(bb.parameters()[0]));
}

TEST_CASE("200 steps on one pair reduce L1 over every 50-step window") {
  MiniBackbone bb(16, 21);
  DegradationSpec spec;
  spec.family = Family::Rain;
  auto pair = make_sample(spec, 0, 32);
  auto x = stack_images({pair.degraded});
  auto y = stack_images({pair.clean});
  Adam opt(bb.parameters(), 200);
  std::vector<double> losses;
  for (int s = 0; s < 200; ++s) {
    auto loss = l1_mean(bb.forward(x), y);
    losses.push_back(loss.item());
    loss.backward();
    opt.step();
    opt.zero_grad();
  }
  for (std::size_t w = 0; w + 50 <= losses.size(); w += 50) {
    INFO("window at " << w);
    CHECK(losses[w + 49] < losses[w]);
  }
}
