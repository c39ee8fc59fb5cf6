#include "delnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "delnet/error.hpp"

namespace delnet {

double psnr(const Tensor& pred, const Tensor& gt, double max_val) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("psnr: shape mismatch " + shape_string(pred.shape()) + " vs " +
                     shape_string(gt.shape()));
  }
  auto a = pred.data();
  auto b = gt.data();
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

std::vector<double> luminance(const Tensor& image) {
  const auto& s = image.shape();
  const bool batched = s.size() == 4 && s[0] == 1;
  if (!((s.size() == 3 && s[0] == 3) || (batched && s[1] == 3))) {
    throw ShapeError("luminance: expected a single RGB image, got " + shape_string(s));
  }
  const std::size_t plane = s[s.size() - 1] * s[s.size() - 2];
  auto d = image.data();
  std::vector<double> y(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    y[i] = 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
  }
  return y;
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    taps[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Separable valid-mode Gaussian filter of an h×w plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& taps) {
  const std::size_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += taps[k] * src[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("ssim: shape mismatch " + shape_string(pred.shape()) + " vs " +
                     shape_string(gt.shape()));
  }
  const auto& s = pred.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h < kWindow || w < kWindow) {
    throw ShapeError("ssim: image " + shape_string(s) + " smaller than the 11x11 window");
  }
  const auto x = luminance(pred);
  const auto y = luminance(gt);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto taps = gaussian_taps();
  const auto mx = filter_valid(x, h, w, taps);
  const auto my = filter_valid(y, h, w, taps);
  const auto mxx = filter_valid(xx, h, w, taps);
  const auto myy = filter_valid(yy, h, w, taps);
  const auto mxy = filter_valid(xy, h, w, taps);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

void ForgettingMatrix::add_row(std::vector<QualityEntry> row) {
  if (row.size() != rows_.size() + 1) {
    throw Error("forgetting matrix row " + std::to_string(rows_.size()) + " needs " +
                std::to_string(rows_.size() + 1) + " entries, got " + std::to_string(row.size()));
  }
  rows_.push_back(std::move(row));
}

const QualityEntry& ForgettingMatrix::at(std::size_t after_task, std::size_t eval_task) const {
  if (after_task >= rows_.size() || eval_task > after_task) {
    throw Error("forgetting matrix entry (" + std::to_string(after_task) + ", " +
                std::to_string(eval_task) + ") is not populated");
  }
  return rows_[after_task][eval_task];
}

ForgettingSummary forgetting_report(const ForgettingMatrix& matrix) {
  if (matrix.tasks() < 2) {
    throw Error("forgetting_report needs at least two trained tasks");
  }
  ForgettingSummary out;
  const std::size_t last = matrix.tasks() - 1;
  for (std::size_t j = 0; j < last; ++j) {
    out.per_task.push_back(matrix.at(last, j).psnr - matrix.at(j, j).psnr);
  }
  out.min = *std::min_element(out.per_task.begin(), out.per_task.end());
  double total = 0.0;
  for (double f : out.per_task) total += f;
  out.mean = total / static_cast<double>(out.per_task.size());
  return out;
}

}  // namespace delnet
