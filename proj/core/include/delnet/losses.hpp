#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "delnet/backbone.hpp"
#include "delnet/experts.hpp"
#include "delnet/random.hpp"
#include "delnet/tensor.hpp"

namespace delnet {

struct LossWeights {
  double alpha = 0.8;      // distillation
  double lambda = 0.3;     // projection
  double beta1 = 0.1;      // contrast inside L_sw
  double beta2 = 0.1;      // contrast inside L_kd
  double gamma = 0.01;     // diversity
  double contrast_eps = 1e-7;
};

/// Which optional terms take part in the objective. L_sw⁰ is always on.
struct LossToggles {
  bool contrast = true;
  bool distill = true;
  bool projection = true;
  bool regularization = true;
  bool diversity = true;

  bool operator==(const LossToggles&) const = default;
};

/// Mean absolute error between prediction and target.
Tensor reconstruction_loss(const Tensor& pred, const Tensor& gt);

/// L1(φ(a), φ(p)) / (L1(φ(a), φ(n)) + ε), with φ a frozen encoder. Only the
/// anchor carries gradient; positive and negative are treated as constants.
Tensor contrast_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                     const MiniBackbone& phi, double eps = 1e-7);

/// L1(old, new) + β₂ · contrast(new, old, input_old).
Tensor distillation_loss(const Tensor& pred_new, const Tensor& pred_old, const Tensor& input_old,
                         const MiniBackbone& phi, double beta2);

/// conv1×1(C→C/2) → relu → conv1×1(C/2→C/4) → global average pool.
class Projector {
 public:
  Projector() = default;
  Projector(std::size_t channels, std::uint64_t seed);

  Tensor forward(const Tensor& features) const;
  std::size_t output_size() const { return out_; }

  std::vector<Tensor> parameters() const { return {w1_, b1_, w2_, b2_}; }
  void set_parameters(const std::vector<Tensor>& params);
  void set_trainable(bool trainable);
  Projector frozen_copy() const;

 private:
  std::size_t out_ = 0;
  Tensor w1_, b1_, w2_, b2_;
};

/// ‖P(f_old) − P(f_new)‖₁ (mean). The teacher path goes through a detached
/// copy of the projector, so neither f_old nor the projector receive
/// gradient from it.
Tensor projection_loss(const Tensor& f_old, const Tensor& f_new, const Projector& projector);

/// Σ over adapters of the Frobenius norm of each adapter's projection
/// kernels taken together. Callers pass trainable adapters only.
Tensor adapter_regularization(std::span<const Adapter* const> adapters);

/// 0.01 · min(step / (5 · total_steps), 0.1).
double dynamic_beta(std::int64_t step, std::int64_t total_steps);

/// −γ · population_std(losses); 0 for a single loss.
double diversity_loss(std::span<const double> losses, double gamma = 0.01);
Tensor diversity_loss(std::span<const Tensor> losses, double gamma = 0.01);

struct LossParts {
  Tensor sw;    // L_sw⁰, required
  Tensor c;     // contrast of the current prediction
  Tensor kd;    // combined distillation term
  Tensor p;     // projection term
  Tensor reg;   // adapter regularization
  Tensor div;   // diversity term
};

struct LossBreakdown {
  double l_sw = 0.0;
  double l_c = 0.0;
  double l_kd = 0.0;
  double l_p = 0.0;
  double l_reg = 0.0;
  double l_div = 0.0;
  double beta_dynamic = 0.0;
  double total = 0.0;
  std::int64_t step = 0;

  /// The weighted sum recomputed from the reported parts.
  double recompose(const LossWeights& w) const;
};

struct TotalLoss {
  Tensor value;
  LossBreakdown breakdown;
};

/// L_sw⁰ + β₁L_c + α·L_kd + λ·L_p + β·L_reg + L_div. Terms that are
/// undefined or toggled off contribute zero and are reported as zero.
TotalLoss total_loss(const LossParts& parts, const LossToggles& toggles,
                     const LossWeights& weights, std::int64_t step, std::int64_t total_steps);

}  // namespace delnet
