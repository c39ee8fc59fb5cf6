#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "delnet/experts.hpp"
#include "delnet/losses.hpp"
#include "delnet/synth.hpp"
#include "delnet/valve.hpp"

namespace delnet {

/// Everything that determines a continual-learning run. Together with the
/// seed it fixes every logged number.
struct RunConfig {
  std::vector<Family> tasks{Family::Haze, Family::Rain, Family::Snow};
  std::int64_t steps_per_task = 2000;
  std::size_t batch_size = 2;
  std::size_t image_size = 32;
  std::size_t feature_width = 16;
  std::size_t adapter_reduction = 4;
  std::size_t expert_capacity = 30;
  std::size_t k_transfer = 3;
  std::size_t k_new = 1;
  FreezePolicy freeze_policy = FreezePolicy::Blending;
  ThresholdUpdateMode threshold_update_mode = ThresholdUpdateMode::Delta;
  SignatureNormalization signature_normalization = SignatureNormalization::WithinTask;
  LossToggles losses{};
  double beta1 = 0.1;
  double beta2 = 0.1;
  double learning_rate = 2e-4;
  double temperature = kFusionTemperature;
  std::uint64_t seed = 0;
  std::size_t onset_batches = 4;
  std::size_t replay_size = 16;
  std::size_t eval_samples = 16;
  std::size_t routing_window = 50;
  bool use_valve = true;
  bool use_experts = true;
  bool update_frozen_scores = true;
  bool old_task_score_refresh = false;
  std::string output_dir;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
  LossWeights loss_weights() const;
  LibraryConfig library_config() const;
};

/// JSON (de)serialization. Unknown keys are rejected; missing keys keep
/// their defaults.
RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace delnet
