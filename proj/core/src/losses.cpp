#include "delnet/losses.hpp"

#include <algorithm>

#include "delnet/error.hpp"
#include "delnet/ops.hpp"

namespace delnet {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(where) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Tensor reconstruction_loss(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "reconstruction_loss");
  return l1_mean(pred, gt);
}

Tensor contrast_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                     const MiniBackbone& phi, double eps) {
  require_same_shape(anchor, positive, "contrast_loss");
  require_same_shape(anchor, negative, "contrast_loss");
  Tensor fa = phi.encode(anchor);
  Tensor fp = phi.encode(positive.detach());
  Tensor fn = phi.encode(negative.detach());
  return div(l1_mean(fa, fp), add_scalar(l1_mean(fa, fn), eps));
}

Tensor distillation_loss(const Tensor& pred_new, const Tensor& pred_old, const Tensor& input_old,
                         const MiniBackbone& phi, double beta2) {
  if (!pred_old.defined()) {
    throw Error("distillation_loss: missing teacher outputs");
  }
  require_same_shape(pred_new, pred_old, "distillation_loss");
  Tensor teacher = pred_old.detach();
  Tensor plain = l1_mean(teacher, pred_new);
  if (beta2 == 0.0) return plain;
  return add(plain, scale(contrast_loss(pred_new, teacher, input_old, phi), beta2));
}

Projector::Projector(std::size_t channels, std::uint64_t seed) {
  if (channels < 4 || channels % 4 != 0) {
    throw ConfigError("projector needs a channel count divisible by 4");
  }
  out_ = channels / 4;
  CounterRng rng(seed, stream_key(0x9e0ec7ull));
  w1_ = he_uniform({channels / 2, channels, 1, 1}, rng);
  b1_ = Tensor::zeros({channels / 2}, true);
  w2_ = he_uniform({out_, channels / 2, 1, 1}, rng);
  b2_ = Tensor::zeros({out_}, true);
}

Tensor Projector::forward(const Tensor& features) const {
  Tensor h = relu(conv2d(features, w1_, b1_, Padding::Same));
  return global_avg_pool(conv2d(h, w2_, b2_, Padding::Same));
}

void Projector::set_parameters(const std::vector<Tensor>& params) {
  if (params.size() != 4 || params[2].rank() != 4) {
    throw ShapeError("projector expects w1, b1, w2, b2");
  }
  out_ = params[2].dim(0);
  w1_ = params[0];
  b1_ = params[1];
  w2_ = params[2];
  b2_ = params[3];
}

void Projector::set_trainable(bool trainable) {
  for (auto* p : {&w1_, &b1_, &w2_, &b2_}) {
    if (p->requires_grad() != trainable) p->set_requires_grad(trainable);
  }
}

Projector Projector::frozen_copy() const {
  Projector copy;
  std::vector<Tensor> params;
  for (const auto& p : parameters()) params.push_back(p.detach());
  copy.set_parameters(params);
  return copy;
}

Tensor projection_loss(const Tensor& f_old, const Tensor& f_new, const Projector& projector) {
  require_same_shape(f_old, f_new, "projection_loss");
  Tensor h_old = projector.frozen_copy().forward(f_old.detach());
  Tensor h_new = projector.forward(f_new);
  return l1_mean(h_old, h_new);
}

Tensor adapter_regularization(std::span<const Adapter* const> adapters) {
  Tensor total = Tensor::scalar(0.0);
  for (const auto* a : adapters) {
    total = add(total, frobenius_norm(a->projection_weights()));
  }
  return total;
}

double dynamic_beta(std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) {
    throw ConfigError("dynamic_beta: total_steps must be positive");
  }
  const double ratio =
      static_cast<double>(std::max<std::int64_t>(step, 0)) / (static_cast<double>(total_steps) * 5.0);
  return 0.01 * std::min(ratio, 0.1);
}

double diversity_loss(std::span<const double> losses, double gamma) {
  if (losses.empty()) {
    throw Error("diversity_loss: empty loss list");
  }
  if (losses.size() == 1) return 0.0;
  return -gamma * population_std(losses);
}

Tensor diversity_loss(std::span<const Tensor> losses, double gamma) {
  if (losses.empty()) {
    throw Error("diversity_loss: empty loss list");
  }
  if (losses.size() == 1) return Tensor::scalar(0.0);
  return scale(population_std(losses), -gamma);
}

double LossBreakdown::recompose(const LossWeights& w) const {
  return l_sw + w.beta1 * l_c + w.alpha * l_kd + w.lambda * l_p + beta_dynamic * l_reg + l_div;
}

TotalLoss total_loss(const LossParts& parts, const LossToggles& toggles,
                     const LossWeights& weights, std::int64_t step, std::int64_t total_steps) {
  if (!parts.sw.defined()) {
    throw Error("total_loss: reconstruction term is required");
  }
  TotalLoss out;
  auto& b = out.breakdown;
  b.step = step;
  b.beta_dynamic = dynamic_beta(step, total_steps);

  // Same accumulation order as LossBreakdown::recompose.
  Tensor total = parts.sw;
  b.l_sw = parts.sw.item();
  auto include = [&total](bool on, const Tensor& term, double weight, double& slot) {
    if (!on || !term.defined()) return;
    slot = term.item();
    total = add(total, weight == 1.0 ? term : scale(term, weight));
  };
  include(toggles.contrast, parts.c, weights.beta1, b.l_c);
  include(toggles.distill, parts.kd, weights.alpha, b.l_kd);
  include(toggles.projection, parts.p, weights.lambda, b.l_p);
  include(toggles.regularization, parts.reg, b.beta_dynamic, b.l_reg);
  include(toggles.diversity, parts.div, 1.0, b.l_div);
  out.value = total;
  b.total = total.item();
  return out;
}

}  // namespace delnet
