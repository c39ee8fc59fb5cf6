#pragma once

#include <cstdint>
#include <vector>

#include "delnet/tensor.hpp"

namespace delnet {

struct AdamHyper {
  double base_lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// base_lr · ½(1 + cos(π·step/total)); step is clamped to [0, total].
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

/// Adam over a fixed parameter list with a cosine-decayed learning rate.
/// Gradients are left in place after step(); call zero_grad() explicitly.
class Adam {
 public:
  Adam(std::vector<Tensor> params, std::int64_t total_steps, AdamHyper hyper = {});

  void step();
  void zero_grad();

  double current_lr() const { return cosine_lr(hyper_.base_lr, step_, total_steps_); }
  std::int64_t step_count() const { return step_; }
  std::int64_t total_steps() const { return total_steps_; }
  const AdamHyper& hyper() const { return hyper_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
  std::int64_t total_steps_;
  AdamHyper hyper_;
};

}  // namespace delnet
