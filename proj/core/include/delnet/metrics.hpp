#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "delnet/tensor.hpp"

namespace delnet {

/// Returned when the two images are identical.
inline constexpr double kPsnrCap = 99.0;

/// 10·log10(max² / MSE), capped at 99 dB.
double psnr(const Tensor& pred, const Tensor& gt, double max_val = 1.0);

/// Rec. 601 luma of a 3×H×W (or 1×3×H×W) image, as an H×W plane.
std::vector<double> luminance(const Tensor& image);

/// Mean SSIM over valid 11×11 Gaussian (σ=1.5) windows of the luma planes,
/// K1=0.01, K2=0.03, dynamic range 1.
double ssim(const Tensor& pred, const Tensor& gt);

struct QualityEntry {
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Row = index of the task after whose training the evaluation ran,
/// column = evaluated task. Only j ≤ i is populated.
class ForgettingMatrix {
 public:
  /// Appends the row for a freshly trained task; must hold row_index + 1
  /// entries.
  void add_row(std::vector<QualityEntry> row);
  std::size_t tasks() const { return rows_.size(); }
  const QualityEntry& at(std::size_t after_task, std::size_t eval_task) const;
  const std::vector<std::vector<QualityEntry>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<QualityEntry>> rows_;
};

struct ForgettingSummary {
  std::vector<double> per_task;  // final PSNR − PSNR right after training, tasks 0..n−2
  double min = 0.0;
  double mean = 0.0;
};

/// Needs at least two trained tasks.
ForgettingSummary forgetting_report(const ForgettingMatrix& matrix);

}  // namespace delnet
