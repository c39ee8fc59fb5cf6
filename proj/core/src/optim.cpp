#include "delnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "delnet/error.hpp"

namespace delnet {

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) {
    throw ConfigError("cosine schedule needs total_steps > 0");
  }
  const double progress =
      static_cast<double>(std::clamp<std::int64_t>(step, 0, total_steps)) /
      static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(std::vector<Tensor> params, std::int64_t total_steps, AdamHyper hyper)
    : params_(std::move(params)), total_steps_(total_steps), hyper_(hyper) {
  if (total_steps_ <= 0) {
    throw ConfigError("Adam: total_steps must be positive");
  }
  if (!(hyper_.base_lr > 0.0)) {
    throw ConfigError("Adam: base learning rate must be positive");
  }
  for (const auto& p : params_) {
    if (!p.defined() || !p.is_leaf()) {
      throw Error("Adam: parameters must be defined leaf tensors");
    }
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.requires_grad()) {
      throw Error("Adam: parameter " + shape_string(p.shape()) + " has no gradient");
    }
  }
  const double lr = current_lr();
  const double t = static_cast<double>(step_ + 1);
  const double bc1 = 1.0 - std::pow(hyper_.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].mutable_data();
    auto grad = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = hyper_.beta1 * m[i] + (1.0 - hyper_.beta1) * grad[i];
      v[i] = hyper_.beta2 * v[i] + (1.0 - hyper_.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + hyper_.eps);
    }
    check_finite(data, "Adam::step");
  }
  ++step_;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace delnet
