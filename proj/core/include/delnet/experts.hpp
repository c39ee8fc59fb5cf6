#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "delnet/random.hpp"
#include "delnet/tensor.hpp"
#include "delnet/valve.hpp"

namespace delnet {

using ExpertId = std::int64_t;

inline constexpr double kScoreEpsilon = 1e-6;
inline constexpr double kScoreMomentum = 0.9;
inline constexpr double kFusionTemperature = 0.1;

/// Residual bottleneck adapter:
///   x + up(relu(down(instance_norm(x))))
/// with 1×1 projections C → C/r → C.
class Adapter {
 public:
  Adapter() = default;
  /// down is He-uniform; up (weights and bias) starts at zero so a fresh
  /// adapter is an exact identity.
  Adapter(std::size_t channels, std::size_t reduction, CounterRng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t channels() const { return channels_; }
  std::size_t hidden() const { return hidden_; }
  /// down_w, down_b, up_w, up_b.
  std::vector<Tensor> parameters() const;
  /// The projection kernels only (down_w, up_w).
  std::vector<Tensor> projection_weights() const { return {down_w_, up_w_}; }
  void set_parameters(const std::vector<Tensor>& params);
  void set_trainable(bool trainable);
  Adapter deep_copy() const;

 private:
  std::size_t channels_ = 0;
  std::size_t hidden_ = 0;
  Tensor down_w_, down_b_, up_w_, up_b_;
};

struct ExpertRecord {
  ExpertId id = 0;
  Adapter params;
  double performance = 0.0;  // P_i
  std::int64_t usage_count = 0;  // C_i
  bool frozen = false;
  std::set<TaskId> owner_tasks;
  std::optional<std::uint64_t> frozen_digest;

  std::uint64_t digest() const;
};

/// P / (C + ε).
double expert_score(const ExpertRecord& record);

/// P ← 0.9·P + 0.1/(L + ε) and one more recorded use.
void ema_update(ExpertRecord& record, double task_loss);

/// Softmax of −L/τ with max-subtraction.
std::vector<double> fusion_weights(std::span<const double> losses,
                                   double temperature = kFusionTemperature);

enum class FreezePolicy { AllTrainable, Blending, AllFrozen };
std::string to_string(FreezePolicy policy);
FreezePolicy freeze_policy_from_string(const std::string& name);

struct LibraryConfig {
  std::size_t channels = 16;
  std::size_t reduction = 4;
  std::size_t capacity = 30;    // N_E
  std::size_t k_transfer = 3;
  std::size_t k_new = 1;
  double temperature = kFusionTemperature;
  FreezePolicy freeze_policy = FreezePolicy::Blending;
  bool update_frozen_scores = true;
};

struct ActiveSet {
  std::vector<ExpertId> experts;    // transfer experts first, then new ones
  std::vector<ExpertId> trainable;  // subset of experts
  std::vector<ExpertId> allocated;  // experts created for this task
};

class ExpertLibrary {
 public:
  ExpertLibrary() = default;
  ExpertLibrary(LibraryConfig config, std::uint64_t seed);

  const LibraryConfig& config() const { return config_; }
  const std::vector<ExpertRecord>& experts() const { return experts_; }
  std::size_t size() const { return experts_.size(); }
  ExpertId next_id() const { return next_id_; }

  ExpertRecord& at(ExpertId id);
  const ExpertRecord& at(ExpertId id) const;
  bool contains(ExpertId id) const;

  /// Ids of the k highest-scoring experts, best first; ties to lower id.
  std::vector<ExpertId> select_topk(std::size_t k) const;

  /// Appends one trainable identity expert; throws once capacity is reached.
  ExpertId allocate();

  /// New: Top-k transfer experts plus k_new fresh ones. Old: every expert
  /// owned by the matched task, nothing trainable, one use recorded each.
  /// For New the task id is recorded as an owner of all active experts.
  ActiveSet handle_task(const TaskDecision& decision, TaskId task);

  std::vector<ExpertId> experts_of_task(TaskId task) const;

  /// Freezes every expert owned by `task` and records parameter digests.
  void freeze_task_experts(TaskId task);

  /// Ids whose current digest differs from the digest taken at freeze time.
  std::vector<ExpertId> verify_frozen() const;

  Tensor fuse(std::span<const ExpertId> active, std::span<const double> weights,
              const Tensor& x) const;

  /// Internal: used when restoring from a checkpoint.
  void restore(std::vector<ExpertRecord> experts, ExpertId next_id, std::uint64_t rng_counter);
  std::uint64_t rng_counter() const { return rng_.counter(); }
  /// Copy whose adapters do not alias this library's storage.
  ExpertLibrary deep_copy() const;

 private:
  LibraryConfig config_;
  std::vector<ExpertRecord> experts_;
  ExpertId next_id_ = 0;
  CounterRng rng_{0, 0};
};

/// Σ weights[i] · adapters[i](x). Weights must sum to 1 within 1e-9.
Tensor fuse(std::span<const Adapter* const> adapters, std::span<const double> weights,
            const Tensor& x);

}  // namespace delnet
