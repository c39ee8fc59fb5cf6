#include "delnet/experts.hpp"

#include <algorithm>
#include <cmath>

#include "delnet/backbone.hpp"
#include "delnet/error.hpp"
#include "delnet/ops.hpp"
#include "delnet/tensor_io.hpp"

namespace delnet {

Adapter::Adapter(std::size_t channels, std::size_t reduction, CounterRng& rng)
    : channels_(channels), hidden_(channels / std::max<std::size_t>(reduction, 1)) {
  if (reduction == 0 || hidden_ == 0) {
    throw ConfigError("adapter reduction must leave at least one hidden channel");
  }
  down_w_ = he_uniform({hidden_, channels_, 1, 1}, rng);
  down_b_ = Tensor::zeros({hidden_}, true);
  up_w_ = Tensor::zeros({channels_, hidden_, 1, 1}, true);
  up_b_ = Tensor::zeros({channels_}, true);
}

Tensor Adapter::forward(const Tensor& x) const {
  Tensor h = conv2d(instance_norm(x), down_w_, down_b_, Padding::Same);
  return add(x, conv2d(relu(h), up_w_, up_b_, Padding::Same));
}

std::vector<Tensor> Adapter::parameters() const { return {down_w_, down_b_, up_w_, up_b_}; }

void Adapter::set_parameters(const std::vector<Tensor>& params) {
  if (params.size() != 4 || params[0].rank() != 4 || params[2].rank() != 4) {
    throw ShapeError("adapter expects down_w, down_b, up_w, up_b");
  }
  const std::size_t hidden = params[0].dim(0);
  const std::size_t channels = params[0].dim(1);
  if (params[1].shape() != Shape{hidden} || params[2].shape() != Shape{channels, hidden, 1, 1} ||
      params[3].shape() != Shape{channels}) {
    throw ShapeError("adapter parameter shapes are inconsistent");
  }
  channels_ = channels;
  hidden_ = hidden;
  down_w_ = params[0];
  down_b_ = params[1];
  up_w_ = params[2];
  up_b_ = params[3];
}

void Adapter::set_trainable(bool trainable) {
  for (auto* p : {&down_w_, &down_b_, &up_w_, &up_b_}) {
    if (p->requires_grad() != trainable) p->set_requires_grad(trainable);
  }
}

Adapter Adapter::deep_copy() const {
  Adapter copy;
  std::vector<Tensor> params;
  for (const auto& p : parameters()) params.push_back(p.clone());
  copy.set_parameters(params);
  return copy;
}

std::uint64_t ExpertRecord::digest() const { return tensor_digest(params.parameters()); }

double expert_score(const ExpertRecord& record) {
  return record.performance * (1.0 / (static_cast<double>(record.usage_count) + kScoreEpsilon));
}

void ema_update(ExpertRecord& record, double task_loss) {
  if (!(task_loss > 0.0) || !std::isfinite(task_loss)) {
    throw Error("ema_update: task loss must be positive and finite, got " +
                std::to_string(task_loss));
  }
  record.performance = kScoreMomentum * record.performance +
                       (1.0 - kScoreMomentum) * (1.0 / (task_loss + kScoreEpsilon));
  ++record.usage_count;
}

std::vector<double> fusion_weights(std::span<const double> losses, double temperature) {
  if (losses.empty()) {
    throw Error("fusion_weights: empty loss list");
  }
  if (!(temperature > 0.0)) {
    throw Error("fusion_weights: temperature must be positive");
  }
  for (double l : losses) {
    if (!std::isfinite(l)) throw NumericError("fusion_weights: non-finite loss");
  }
  const double lowest = *std::min_element(losses.begin(), losses.end());
  std::vector<double> w(losses.size());
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    w[i] = std::exp(-(losses[i] - lowest) / temperature);
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

std::string to_string(FreezePolicy policy) {
  switch (policy) {
    case FreezePolicy::AllTrainable: return "all_trainable";
    case FreezePolicy::Blending: return "blending";
    case FreezePolicy::AllFrozen: return "all_frozen";
  }
  return "blending";
}

FreezePolicy freeze_policy_from_string(const std::string& name) {
  if (name == "all_trainable") return FreezePolicy::AllTrainable;
  if (name == "blending") return FreezePolicy::Blending;
  if (name == "all_frozen") return FreezePolicy::AllFrozen;
  throw ConfigError("unknown freeze_policy '" + name + "'");
}

ExpertLibrary::ExpertLibrary(LibraryConfig config, std::uint64_t seed)
    : config_(config), rng_(seed, stream_key(0xe4be47ull)) {
  if (config_.capacity == 0 || config_.k_new == 0) {
    throw ConfigError("expert capacity and k_new must be positive");
  }
}

bool ExpertLibrary::contains(ExpertId id) const {
  return std::any_of(experts_.begin(), experts_.end(), [id](const auto& e) { return e.id == id; });
}

ExpertRecord& ExpertLibrary::at(ExpertId id) {
  for (auto& e : experts_) {
    if (e.id == id) return e;
  }
  throw Error("unknown expert id " + std::to_string(id));
}

const ExpertRecord& ExpertLibrary::at(ExpertId id) const {
  return const_cast<ExpertLibrary*>(this)->at(id);
}

std::vector<ExpertId> ExpertLibrary::select_topk(std::size_t k) const {
  if (k < 1 || k > experts_.size()) {
    throw Error("select_topk: k=" + std::to_string(k) + " outside [1, " +
                std::to_string(experts_.size()) + "]");
  }
  std::vector<std::pair<double, ExpertId>> ranked;
  ranked.reserve(experts_.size());
  for (const auto& e : experts_) ranked.emplace_back(expert_score(e), e.id);
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<ExpertId> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(ranked[i].second);
  return ids;
}

ExpertId ExpertLibrary::allocate() {
  if (experts_.size() >= config_.capacity) {
    throw Error("expert capacity exhausted (" + std::to_string(config_.capacity) + " experts)");
  }
  ExpertRecord record;
  record.id = next_id_++;
  record.params = Adapter(config_.channels, config_.reduction, rng_);
  experts_.push_back(std::move(record));
  return experts_.back().id;
}

ActiveSet ExpertLibrary::handle_task(const TaskDecision& decision, TaskId task) {
  ActiveSet active;
  if (decision.kind == TaskKind::Old) {
    if (!decision.task) {
      throw Error("handle_task: Old decision without a matched task");
    }
    active.experts = experts_of_task(*decision.task);
    if (active.experts.empty()) {
      throw Error("handle_task: task " + std::to_string(*decision.task) + " owns no experts");
    }
    for (ExpertId id : active.experts) {
      auto& e = at(id);
      e.params.set_trainable(false);
      ++e.usage_count;
    }
    return active;
  }

  if (experts_.size() + config_.k_new > config_.capacity) {
    throw Error("expert capacity exhausted (" + std::to_string(config_.capacity) + " experts)");
  }
  if (!experts_.empty() && config_.k_transfer > 0) {
    active.experts = select_topk(std::min(config_.k_transfer, experts_.size()));
  }
  if (config_.freeze_policy == FreezePolicy::AllTrainable) {
    active.trainable = active.experts;
  }
  for (std::size_t i = 0; i < config_.k_new; ++i) {
    ExpertId id = allocate();
    active.experts.push_back(id);
    active.trainable.push_back(id);
    active.allocated.push_back(id);
  }
  for (ExpertId id : active.experts) {
    auto& e = at(id);
    e.owner_tasks.insert(task);
    const bool train =
        std::find(active.trainable.begin(), active.trainable.end(), id) != active.trainable.end();
    e.params.set_trainable(train);
  }
  return active;
}

std::vector<ExpertId> ExpertLibrary::experts_of_task(TaskId task) const {
  std::vector<ExpertId> ids;
  for (const auto& e : experts_) {
    if (e.owner_tasks.count(task)) ids.push_back(e.id);
  }
  return ids;
}

void ExpertLibrary::freeze_task_experts(TaskId task) {
  auto ids = experts_of_task(task);
  if (ids.empty()) {
    throw Error("freeze_task_experts: unknown task id " + std::to_string(task));
  }
  for (ExpertId id : ids) {
    auto& e = at(id);
    e.params.set_trainable(false);
    if (!e.frozen) {
      e.frozen = true;
      e.frozen_digest = e.digest();
    }
  }
}

std::vector<ExpertId> ExpertLibrary::verify_frozen() const {
  std::vector<ExpertId> bad;
  for (const auto& e : experts_) {
    if (e.frozen && (!e.frozen_digest || *e.frozen_digest != e.digest())) bad.push_back(e.id);
  }
  return bad;
}

Tensor ExpertLibrary::fuse(std::span<const ExpertId> active, std::span<const double> weights,
                           const Tensor& x) const {
  std::vector<const Adapter*> adapters;
  for (ExpertId id : active) adapters.push_back(&at(id).params);
  return delnet::fuse(adapters, weights, x);
}

void ExpertLibrary::restore(std::vector<ExpertRecord> experts, ExpertId next_id,
                            std::uint64_t rng_counter) {
  experts_ = std::move(experts);
  next_id_ = next_id;
  rng_ = CounterRng(rng_.seed(), rng_.key(), rng_counter);
}

ExpertLibrary ExpertLibrary::deep_copy() const {
  ExpertLibrary copy = *this;
  for (auto& e : copy.experts_) e.params = e.params.deep_copy();
  return copy;
}

Tensor fuse(std::span<const Adapter* const> adapters, std::span<const double> weights,
            const Tensor& x) {
  if (adapters.empty() || adapters.size() != weights.size()) {
    throw Error("fuse: need one weight per active expert");
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error("fuse: weights sum to " + std::to_string(total) + ", expected 1");
  }
  std::vector<Tensor> outputs;
  for (const auto* a : adapters) outputs.push_back(a->forward(x));
  if (outputs.size() == 1) return outputs.front();
  return weighted_sum(outputs, weights);
}

}  // namespace delnet
