#include "delnet/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "delnet/error.hpp"

namespace delnet {

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Experts: return "experts";
    case SweepAxis::Losses: return "losses";
    case SweepAxis::Components: return "components";
    case SweepAxis::Order: return "order";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  for (auto a : {SweepAxis::Experts, SweepAxis::Losses, SweepAxis::Components, SweepAxis::Order}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown sweep axis '" + name +
                    "' (expected experts, losses, components or order)");
}

std::vector<SweepCell> sweep_cells(const RunConfig& base, SweepAxis axis) {
  std::vector<SweepCell> cells;
  switch (axis) {
    case SweepAxis::Experts:
      for (std::size_t n : {15, 20, 25, 30, 35}) {
        RunConfig c = base;
        c.expert_capacity = n;
        cells.push_back({std::to_string(n), c});
      }
      break;
    case SweepAxis::Losses: {
      // Cumulative: reconstruction only, then distill, projection,
      // regularization, and finally contrast together with diversity.
      LossToggles t{false, false, false, false, false};
      const char* labels[] = {"C5", "C6", "C7", "C8", "C9"};
      for (int i = 0; i < 5; ++i) {
        if (i == 1) t.distill = true;
        if (i == 2) t.projection = true;
        if (i == 3) t.regularization = true;
        if (i == 4) t.contrast = t.diversity = true;
        RunConfig c = base;
        c.losses = t;
        cells.push_back({labels[i], c});
      }
      break;
    }
    case SweepAxis::Components: {
      RunConfig baseline = base;
      cells.push_back({"baseline", baseline, false});
      RunConfig plain = base;
      plain.use_valve = false;
      plain.use_experts = false;
      cells.push_back({"backbone", plain});
      RunConfig valve = base;
      valve.use_experts = false;
      cells.push_back({"backbone+valve", valve});
      cells.push_back({"full", base});
      break;
    }
    case SweepAxis::Order: {
      using F = Family;
      const std::vector<std::vector<F>> orders{
          {F::Rain, F::Snow, F::Haze}, {F::Rain, F::Haze, F::Snow}, {F::Haze, F::Snow, F::Rain},
          {F::Haze, F::Rain, F::Snow}, {F::Snow, F::Rain, F::Haze}, {F::Snow, F::Haze, F::Rain}};
      for (const auto& order : orders) {
        RunConfig c = base;
        c.tasks = order;
        std::string label;
        for (auto f : order) label += (label.empty() ? "" : "-") + to_string(f);
        cells.push_back({label, c});
      }
      break;
    }
  }
  for (auto& cell : cells) cell.config.output_dir.clear();
  return cells;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

SweepRow baseline_row(const SweepCell& cell) {
  SweepRow row;
  row.label = cell.label;
  for (auto f : cell.config.tasks) {
    row.task_order += (row.task_order.empty() ? "" : "-") + to_string(f);
  }
  std::vector<Family> seen;
  for (auto f : cell.config.tasks) {
    if (std::find(seen.begin(), seen.end(), f) == seen.end()) seen.push_back(f);
  }
  for (auto f : seen) {
    const Batch val = validation_batch(cell.config, f);
    const std::size_t n = val.degraded.dim(0);
    double p = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p += psnr(batch_item(val.degraded, i), batch_item(val.clean, i));
      s += ssim(batch_item(val.degraded, i), batch_item(val.clean, i));
    }
    row.mean_psnr += p / static_cast<double>(n);
    row.mean_ssim += s / static_cast<double>(n);
  }
  row.tasks = seen.size();
  row.mean_psnr /= static_cast<double>(seen.size());
  row.mean_ssim /= static_cast<double>(seen.size());
  return row;
}

SweepRow trained_row(const SweepCell& cell, const ProgressFn& progress) {
  const ContinualState state = train_stream(cell.config, progress);
  SweepRow row;
  row.label = cell.label;
  for (auto f : cell.config.tasks) {
    row.task_order += (row.task_order.empty() ? "" : "-") + to_string(f);
  }
  row.tasks = state.tasks.size();
  row.experts = state.library.size();
  const auto& last = state.forgetting.rows().back();
  for (const auto& q : last) {
    row.mean_psnr += q.psnr;
    row.mean_ssim += q.ssim;
  }
  row.mean_psnr /= static_cast<double>(last.size());
  row.mean_ssim /= static_cast<double>(last.size());
  if (state.forgetting.tasks() >= 2) row.mean_forgetting = forgetting_report(state.forgetting).mean;
  return row;
}

}  // namespace

std::vector<SweepRow> run_ablation_sweep(const RunConfig& base, SweepAxis axis,
                                         const ProgressFn& progress) {
  base.validate();
  std::vector<SweepRow> rows;
  for (const auto& cell : sweep_cells(base, axis)) {
    if (progress) progress(to_string(axis) + " cell " + cell.label);
    rows.push_back(cell.train ? trained_row(cell, progress) : baseline_row(cell));
  }
  if (!base.output_dir.empty()) {
    std::filesystem::create_directories(base.output_dir);
    const auto path = std::filesystem::path(base.output_dir) / ("sweep_" + to_string(axis) + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "axis,cell,task_order,tasks,experts,mean_psnr,mean_ssim,mean_forgetting\n";
    for (const auto& r : rows) {
      out << to_string(axis) << ',' << r.label << ',' << r.task_order << ',' << r.tasks << ','
          << r.experts << ',' << num(r.mean_psnr) << ',' << num(r.mean_ssim) << ','
          << (r.mean_forgetting ? num(*r.mean_forgetting) : "") << '\n';
    }
  }
  return rows;
}

}  // namespace delnet
