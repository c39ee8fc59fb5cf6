#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "delnet/backbone.hpp"
#include "delnet/config.hpp"
#include "delnet/experts.hpp"
#include "delnet/losses.hpp"
#include "delnet/metrics.hpp"
#include "delnet/synth.hpp"
#include "delnet/valve.hpp"

namespace delnet {

/// A registered (trained) task.
struct TaskEpisode {
  TaskId id = 0;
  Family family = Family::Haze;
  TaskVector signature;
  TaskVector signature_spread;
  std::vector<ExpertId> experts;        // routing used for this task
  std::vector<double> routing_losses;   // per-expert mean loss over the last training steps
  Tensor replay_inputs;                 // R×3×H×W degraded
  Tensor replay_targets;                // R×3×H×W clean
  std::vector<QualityEntry> eval_history;
  double input_psnr = 0.0;
  double input_ssim = 0.0;

  std::vector<double> routing_weights(double temperature) const;
};

/// One presentation of a degradation family to the learner.
struct EpisodeRecord {
  std::size_t episode = 0;
  Family family = Family::Haze;
  TaskDecision decision;
  SimilarityReport similarity;
  std::optional<TaskId> trained_task;  // set when the episode registered a task
  QualityEntry quality;                // on the presented family after the episode
};

/// All mutable learner state. Tensors inside are owned by this object.
struct ContinualState {
  RunConfig config;
  MiniBackbone backbone;
  Projector projector;
  ExpertLibrary library;
  ThresholdState threshold;
  std::vector<TaskEpisode> tasks;
  ForgettingMatrix forgetting;
  std::vector<EpisodeRecord> episodes;
  bool backbone_trained = false;

  explicit ContinualState(RunConfig cfg);
  /// Frozen encoder used as the feature extractor of the contrast loss.
  const MiniBackbone& contrast_encoder() const { return phi_; }
  void rebuild_contrast_encoder();

 private:
  MiniBackbone phi_;
};

// Seeds of the independent random streams, derived from the run seed.
std::uint64_t backbone_seed(std::uint64_t run_seed);
std::uint64_t projector_seed(std::uint64_t run_seed);
std::uint64_t library_seed(std::uint64_t run_seed);
std::uint64_t data_seed(std::uint64_t run_seed);

DegradationSpec family_spec(const RunConfig& config, Family family);

/// Index of training sample `i` of episode `episode`.
std::uint64_t train_index(std::size_t episode, std::uint64_t i);
/// Index of validation sample `i` of a family.
std::uint64_t validation_index(Family family, std::uint64_t i);

struct Batch {
  Tensor degraded;
  Tensor clean;
};

Batch make_batch(const DegradationSpec& spec, const std::vector<std::uint64_t>& indices,
                 std::size_t size);
Batch validation_batch(const RunConfig& config, Family family);

/// Output of the model for `task`'s routing; evaluation never trains.
Tensor route_forward(const MiniBackbone& backbone, const ExpertLibrary& library,
                     const TaskEpisode& task, double temperature, const Tensor& degraded,
                     Tensor* fused_features = nullptr);

/// Clamped predictions of `task`'s routing on `batch`.
Tensor predict(const ContinualState& state, const TaskEpisode& task, const Tensor& degraded);

/// Mean PSNR/SSIM of `task`'s routing on a family's validation split.
QualityEntry evaluate(const ContinualState& state, const TaskEpisode& task, Family family);

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<EpisodeRecord> episodes;
  ForgettingMatrix forgetting;
  std::vector<std::string> frozen_digest_failures;
  std::size_t experts_allocated = 0;
};

/// Observer for progress messages; may be empty.
using ProgressFn = std::function<void(const std::string&)>;

/// Runs the whole task stream, writing logs and the final checkpoint into
/// config.output_dir. Throws on capacity exhaustion, non-finite losses and
/// frozen-digest mismatches.
RunResult run_continual(const RunConfig& config, const ProgressFn& progress = {});

/// Runs the stream in memory and returns the learner state. No files are
/// written unless config.output_dir is set.
ContinualState train_stream(const RunConfig& config, const ProgressFn& progress = {});

}  // namespace delnet
