#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delnet/config.hpp"
#include "delnet/harness.hpp"

namespace delnet {

enum class SweepAxis { Experts, Losses, Components, Order };

std::string to_string(SweepAxis axis);
/// Throws ConfigError for anything but experts, losses, components or order.
SweepAxis sweep_axis_from_string(const std::string& name);

struct SweepCell {
  std::string label;
  RunConfig config;
  bool train = true;  // false: report the degraded inputs as they are
};

/// The cells of one axis, derived from `base`.
std::vector<SweepCell> sweep_cells(const RunConfig& base, SweepAxis axis);

struct SweepRow {
  std::string label;
  std::string task_order;
  std::size_t tasks = 0;
  std::size_t experts = 0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> mean_forgetting;
};

/// Runs every cell and writes sweep_<axis>.csv into base.output_dir (when
/// set). Rows come back in cell order.
std::vector<SweepRow> run_ablation_sweep(const RunConfig& base, SweepAxis axis,
                                         const ProgressFn& progress = {});

}  // namespace delnet
