#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "delnet/checkpoint.hpp"
#include "delnet/config.hpp"
#include "delnet/error.hpp"
#include "delnet/harness.hpp"
#include "delnet/sweep.hpp"
#include "delnet/synth.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seed, "Run seed (overrides the config)");
  cmd->add_option("--steps", f.steps, "Training steps per task (overrides the config)");
}

delnet::RunConfig resolve(const RunFlags& f) {
  delnet::RunConfig c = f.config.empty() ? delnet::RunConfig{} : delnet::load_config(f.config);
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed) c.seed = *f.seed;
  if (f.steps) c.steps_per_task = *f.steps;
  c.validate();
  return c;
}

void print_line(const std::string& s) { std::cerr << s << '\n'; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual multi-weather restoration with a judging valve and an expert library"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Train on a task stream and write logs and a checkpoint");
  add_run_flags(run, run_flags);

  RunFlags sweep_flags;
  std::string axis;
  auto* sweep = app.add_subcommand("sweep", "Run one ablation axis and write sweep_<axis>.csv");
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "experts, losses, components or order")->required();

  std::string eval_ckpt;
  std::optional<std::int64_t> eval_task;
  auto* eval = app.add_subcommand("eval", "Evaluate stored tasks of a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--task", eval_task, "Task id (default: all tasks)");

  std::string verify_ckpt;
  auto* verify = app.add_subcommand("verify", "Reload a checkpoint and check it bit for bit");
  verify->add_option("--checkpoint", verify_ckpt, "Checkpoint directory")->required();

  std::string dump_family;
  std::size_t dump_n = 4;
  std::string dump_out = ".";
  std::uint64_t dump_seed = 0;
  std::size_t dump_size = 32;
  auto* dump = app.add_subcommand("dump-samples", "Write clean/degraded sample pairs as PPM");
  dump->add_option("--family", dump_family, "haze, rain or snow")->required();
  dump->add_option("--n", dump_n, "Number of pairs");
  dump->add_option("--out", dump_out, "Output directory");
  dump->add_option("--seed", dump_seed, "Data seed");
  dump->add_option("--size", dump_size, "Image side length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) {
      const auto config = resolve(run_flags);
      if (config.output_dir.empty()) throw delnet::ConfigError("run needs --out or output_dir");
      const auto result = delnet::run_continual(config, print_line);
      std::cout << "wrote " << result.output_dir.string() << " (" << result.episodes.size()
                << " episodes, " << result.experts_allocated << " experts)\n";
    } else if (*sweep) {
      const auto a = delnet::sweep_axis_from_string(axis);
      const auto config = resolve(sweep_flags);
      const auto rows = delnet::run_ablation_sweep(config, a, print_line);
      std::cout << "cell,tasks,experts,mean_psnr,mean_ssim\n";
      for (const auto& r : rows) {
        std::cout << r.label << ',' << r.tasks << ',' << r.experts << ',' << fmt(r.mean_psnr)
                  << ',' << fmt(r.mean_ssim) << '\n';
      }
    } else if (*eval) {
      const auto state = delnet::load_checkpoint(eval_ckpt);
      std::cout << "task,family,psnr,ssim\n";
      bool found = false;
      for (const auto& t : state.tasks) {
        if (eval_task && t.id != *eval_task) continue;
        found = true;
        const auto q = delnet::evaluate(state, t, t.family);
        std::cout << t.id << ',' << delnet::to_string(t.family) << ',' << fmt(q.psnr) << ','
                  << fmt(q.ssim) << '\n';
      }
      if (eval_task && !found) {
        throw delnet::ConfigError("checkpoint has no task " + std::to_string(*eval_task));
      }
    } else if (*verify) {
      const auto report = delnet::checkpoint_roundtrip(verify_ckpt);
      for (const auto& p : report.problems) std::cerr << "verify: " << p << '\n';
      if (!report.ok) return kExitRuntime;
      std::cout << "checkpoint ok\n";
    } else if (*dump) {
      delnet::DegradationSpec spec;
      spec.family = delnet::family_from_string(dump_family);
      spec.seed = dump_seed;
      std::filesystem::create_directories(dump_out);
      for (std::size_t i = 0; i < dump_n; ++i) {
        const auto s = delnet::make_sample(spec, i, dump_size);
        const std::string stem = dump_family + "_" + std::to_string(i);
        delnet::write_ppm(std::filesystem::path(dump_out) / (stem + "_clean.ppm"), s.clean);
        delnet::write_ppm(std::filesystem::path(dump_out) / (stem + "_degraded.ppm"), s.degraded);
      }
      std::cout << "wrote " << 2 * dump_n << " images to " << dump_out << '\n';
    }
  } catch (const delnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
