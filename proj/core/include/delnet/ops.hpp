#pragma once

#include <span>

#include "delnet/tensor.hpp"

namespace delnet {

enum class Padding { Same, Valid };

// Elementwise ops accept operands of identical shape, or a single-element
// tensor on either side, which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& a);

/// Σ|x| as a single-element tensor. The subgradient at 0 is 0.
Tensor abs_sum(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean absolute difference; the L1 reduction used by every loss term.
Tensor l1_mean(const Tensor& a, const Tensor& b);

/// sqrt(Σ x²) over all elements of all operands. The gradient at the
/// origin is taken as 0.
Tensor frobenius_norm(std::span<const Tensor> operands);
Tensor frobenius_norm(const Tensor& a);

/// Population standard deviation of single-element tensors. The gradient
/// is 0 when all values coincide.
Tensor population_std(std::span<const Tensor> scalars);

/// Stride-1 2-D convolution. input N×Cin×H×W, kernel Cout×Cin×k×k with
/// k ∈ {1, 3}; bias (Cout) may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding);

/// Per-(sample, channel) normalization with population variance.
Tensor instance_norm(const Tensor& input, double eps = 1e-5);

/// N×C×H×W → N×C spatial mean.
Tensor global_avg_pool(const Tensor& input);

/// Σ weights[i] · operands[i]; weights are constants.
Tensor weighted_sum(std::span<const Tensor> operands, std::span<const double> weights);

/// Elementwise clamp without gradient; evaluation-time only.
Tensor clamp_detached(const Tensor& a, double lo, double hi);

}  // namespace delnet
