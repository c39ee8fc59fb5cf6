#include <cmath>
#include <vector>

#include "delnet/backbone.hpp"
#include "delnet/error.hpp"
#include "delnet/experts.hpp"
#include "delnet/losses.hpp"
#include "delnet/ops.hpp"
#include "delnet/random.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace delnet;
using delnet::testing::gradcheck;
using delnet::testing::random_tensor;

namespace {

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.at(i) - b.at(i));
  return s / static_cast<double>(a.numel());
}

// Scalar reference for the contrast ratio on precomputed encoder features.
double contrast_reference(const Tensor& a, const Tensor& p, const Tensor& n,
                          const MiniBackbone& phi, double eps) {
  const auto fa = phi.encode(a.detach()), fp = phi.encode(p.detach()), fn = phi.encode(n.detach());
  return mean_abs_diff(fa, fp) / (mean_abs_diff(fa, fn) + eps);
}

Tensor image(CounterRng& rng, bool grad = false) {
  return random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0, 0.0, grad);
}

}  // namespace

TEST_CASE("reconstruction loss examples") {
  auto gt = Tensor::full({1, 3, 4, 4}, 0.5);
  CHECK(reconstruction_loss(gt, gt).item() == 0.0);
  auto pred = Tensor::full({1, 3, 4, 4}, 0.6);
  CHECK(reconstruction_loss(pred, gt).item() == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(reconstruction_loss(pred, Tensor::zeros({1, 3, 4, 5})), ShapeError);
}

TEST_CASE("reconstruction loss gradient is sign over n") {
  CounterRng rng(1, 0);
  auto pred = random_tensor({1, 3, 4, 4}, rng, 0, 1, 0.05, true);
  auto gt = random_tensor({1, 3, 4, 4}, rng, 0, 1, 0, false);
  auto loss = reconstruction_loss(pred, gt);
  loss.backward();
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double expected = (pred.at(i) > gt.at(i) ? 1.0 : -1.0) / 48.0;
    CHECK(pred.grad()[i] == doctest::Approx(expected).epsilon(1e-15));
  }
  pred.zero_grad();
  auto r = gradcheck([&](const auto& in) { return reconstruction_loss(in[0], gt); }, {pred});
  CHECK(r.max_error < 1e-6);
}

TEST_CASE("contrast loss examples") {
  const MiniBackbone phi(8, 3);
  CounterRng rng(2, 0);
  auto a = image(rng), n = image(rng), p = image(rng);
  CHECK(contrast_loss(a, a, n, phi).item() == 0.0);
  const double pole = contrast_loss(a, p, a, phi).item();
  CHECK(std::isfinite(pole));
  CHECK(pole == doctest::Approx(mean_abs_diff(phi.encode(a), phi.encode(p)) / 1e-7).epsilon(1e-12));
  CHECK(pole > 1e4);
  CHECK_THROWS_AS(contrast_loss(a, Tensor::zeros({1, 3, 6, 5}), n, phi), ShapeError);
}

TEST_CASE("contrast loss matches the scalar reference on symmetric perturbations") {
  const MiniBackbone phi(8, 4);
  CounterRng rng(3, 0);
  auto base = random_tensor({1, 3, 6, 6}, rng, 0.2, 0.8, 0, false);
  auto delta = random_tensor({1, 3, 6, 6}, rng, -0.1, 0.1, 0, false);
  auto plus = add(base, delta), minus = sub(base, delta);
  for (const auto& [a, p, n] : {std::tuple{base, plus, minus}, std::tuple{base, minus, plus},
                                std::tuple{plus, base, minus}, std::tuple{minus, plus, base}}) {
    CHECK(contrast_loss(a, p, n, phi).item() ==
          doctest::Approx(contrast_reference(a, p, n, phi, 1e-7)).epsilon(1e-12));
  }
}

TEST_CASE("contrast loss gradient reaches only the anchor") {
  const MiniBackbone phi = MiniBackbone(8, 5).frozen_copy();
  CounterRng rng(4, 0);
  auto a = image(rng, true), p = image(rng, true), n = image(rng, true);
  contrast_loss(a, p, n, phi).backward();
  double pn = 0.0;
  for (double g : p.grad()) pn += std::abs(g);
  for (double g : n.grad()) pn += std::abs(g);
  CHECK(pn == 0.0);
  a.zero_grad();
  auto r = gradcheck([&](const auto& in) { return contrast_loss(in[0], p.detach(), n.detach(), phi); }, {a});
  CHECK(r.max_error < 1e-6);
}

TEST_CASE("distillation loss examples") {
  const MiniBackbone phi(8, 6);
  CounterRng rng(5, 0);
  auto old_pred = image(rng), input = image(rng), new_pred = image(rng);
  CHECK(distillation_loss(old_pred, old_pred, input, phi, 0.1).item() == 0.0);
  CHECK(distillation_loss(new_pred, old_pred, input, phi, 0.0).item() ==
        reconstruction_loss(new_pred, old_pred).item());
  const double expected = mean_abs_diff(new_pred, old_pred) +
                          0.1 * contrast_reference(new_pred, old_pred, input, phi, 1e-7);
  CHECK(distillation_loss(new_pred, old_pred, input, phi, 0.1).item() ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("projector output length is a quarter of the channels") {
  const Projector proj(16, 1);
  CHECK(proj.output_size() == 4);
  CounterRng rng(6, 0);
  auto f = random_tensor({2, 16, 5, 5}, rng, -1, 1, 0, false);
  CHECK(proj.forward(f).shape() == Shape{2, 4});
  CHECK_THROWS(Projector(6, 1));
}

TEST_CASE("projection loss is zero on equal features and routes gradient to the student") {
  Projector proj(8, 2);
  proj.set_trainable(true);
  CounterRng rng(7, 0);
  auto f_old = random_tensor({1, 8, 4, 4}, rng, -1, 1, 0, true);
  auto f_new = random_tensor({1, 8, 4, 4}, rng, -1, 1, 0, true);
  CHECK(projection_loss(f_old, f_old, proj).item() == 0.0);
  CHECK(projection_loss(f_old, f_new, proj).item() ==
        doctest::Approx(mean_abs_diff(proj.forward(f_old.detach()), proj.forward(f_new.detach())))
            .epsilon(1e-14));

  f_old.zero_grad();
  f_new.zero_grad();
  for (auto& p : proj.parameters()) p.zero_grad();
  projection_loss(f_old, f_new, proj).backward();
  auto l1 = [](std::span<const double> g) {
    double s = 0.0;
    for (double v : g) s += std::abs(v);
    return s;
  };
  CHECK(l1(f_old.grad()) == 0.0);
  CHECK(l1(f_new.grad()) > 0.0);
  double proj_grad = 0.0;
  for (const auto& p : proj.parameters()) proj_grad += l1(p.grad());
  CHECK(proj_grad > 0.0);
  CHECK_THROWS_AS(projection_loss(f_old, random_tensor({1, 8, 4, 5}, rng), proj), ShapeError);
}

TEST_CASE("adapter regularization") {
  CounterRng rng(8, 0);
  Adapter a(4, 2, rng);
  for (auto& p : a.parameters()) {
    for (auto& v : p.mutable_data()) v = 0.0;
  }
  const std::vector<const Adapter*> one{&a};
  CHECK(adapter_regularization(one).item() == 0.0);

  // a 3-4 pair in the down kernel and zeros elsewhere gives norm 5
  a.projection_weights()[0].mutable_data()[0] = 3.0;
  a.projection_weights()[0].mutable_data()[1] = 4.0;
  CHECK(adapter_regularization(one).item() == 5.0);

  Adapter b(4, 2, rng);
  const std::vector<const Adapter*> both{&a, &b};
  const double with_b = adapter_regularization(both).item();
  CHECK(with_b >= 5.0);
  CHECK(adapter_regularization(std::vector<const Adapter*>{}).item() == 0.0);
}

TEST_CASE("dynamic beta") {
  CHECK(dynamic_beta(0, 2000) == 0.0);
  CHECK(dynamic_beta(2000, 2000) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(dynamic_beta(200, 2000) == doctest::Approx(0.0002).epsilon(1e-15));
  double prev = 0.0;
  for (std::int64_t s = 0; s <= 5000; s += 7) {
    const double b = dynamic_beta(s, 1000);
    CHECK(b >= prev);
    CHECK(b <= 0.001);
    prev = b;
  }
  CHECK_THROWS(dynamic_beta(1, 0));
  CHECK(dynamic_beta(-1, 10) == 0.0);
}

TEST_CASE("diversity loss") {
  CHECK(diversity_loss(std::vector<double>{0.1, 0.1}) == 0.0);
  CHECK(diversity_loss(std::vector<double>{0.0, 0.2}) == doctest::Approx(-0.001).epsilon(1e-14));
  CHECK(diversity_loss(std::vector<double>{0.7}) == 0.0);
  CHECK_THROWS(diversity_loss(std::vector<double>{}));
  CounterRng rng(9, 0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> l(static_cast<std::size_t>(rng.integer(1, 5)));
    for (auto& v : l) v = rng.uniform(0, 3);
    CHECK(diversity_loss(l) <= 0.0);
    std::vector<Tensor> t;
    for (double v : l) t.push_back(Tensor::scalar(v));
    CHECK(diversity_loss(t).item() == doctest::Approx(diversity_loss(l)).epsilon(1e-14));
  }
}

TEST_CASE("total loss examples") {
  LossParts parts;
  parts.sw = Tensor::scalar(1.0);
  const LossWeights w;
  auto first = total_loss(parts, LossToggles{}, w, 0, 100);
  CHECK(first.breakdown.total == 1.0);
  CHECK(first.breakdown.l_kd == 0.0);

  parts.kd = Tensor::scalar(1.0);
  parts.p = Tensor::scalar(1.0);
  parts.reg = Tensor::scalar(0.0);
  parts.div = Tensor::scalar(0.0);
  auto r = total_loss(parts, LossToggles{}, w, 10, 100);
  CHECK(r.breakdown.total == doctest::Approx(2.1).epsilon(1e-15));
  CHECK(r.value.item() == r.breakdown.total);

  CHECK_THROWS(total_loss(LossParts{}, LossToggles{}, w, 0, 100));
}

TEST_CASE("every toggle combination changes the total by exactly the dropped terms") {
  const LossWeights w;
  LossParts parts;
  parts.sw = Tensor::scalar(0.31);
  parts.c = Tensor::scalar(0.57);
  parts.kd = Tensor::scalar(0.23);
  parts.p = Tensor::scalar(0.11);
  parts.reg = Tensor::scalar(4.2);
  parts.div = Tensor::scalar(-0.0013);
  const std::int64_t step = 60, total = 100;
  const double beta = dynamic_beta(step, total);
  const double weighted[5] = {w.beta1 * 0.57, w.alpha * 0.23, w.lambda * 0.11, beta * 4.2, -0.0013};
  const double full = total_loss(parts, LossToggles{}, w, step, total).breakdown.total;

  for (int mask = 0; mask < 32; ++mask) {
    LossToggles t;
    t.contrast = mask & 1;
    t.distill = mask & 2;
    t.projection = mask & 4;
    t.regularization = mask & 8;
    t.diversity = mask & 16;
    const auto b = total_loss(parts, t, w, step, total).breakdown;
    double dropped = 0.0;
    for (int k = 0; k < 5; ++k) {
      if (!(mask & (1 << k))) dropped += weighted[k];
    }
    CHECK(std::abs((full - b.total) - dropped) < 1e-12);
    CHECK(b.recompose(w) == b.total);
    CHECK(b.beta_dynamic == beta);
    if (!t.distill) CHECK(b.l_kd == 0.0);
    if (!t.contrast) CHECK(b.l_c == 0.0);
  }
}

TEST_CASE("components are non-negative except diversity") {
  const MiniBackbone phi(8, 7);
  CounterRng rng(10, 0);
  for (int i = 0; i < 20; ++i) {
    auto a = image(rng), b = image(rng), c = image(rng);
    CHECK(reconstruction_loss(a, b).item() >= 0.0);
    CHECK(contrast_loss(a, b, c, phi).item() >= 0.0);
    CHECK(distillation_loss(a, b, c, phi, 0.1).item() >= 0.0);
  }
}
