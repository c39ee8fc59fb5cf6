#include "delnet/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

#include "delnet/checkpoint.hpp"
#include "delnet/error.hpp"
#include "delnet/ops.hpp"
#include "delnet/optim.hpp"
#include "delnet/random.hpp"
#include "json.hpp"

namespace delnet {

std::uint64_t backbone_seed(std::uint64_t run_seed) { return stream_key(run_seed, 1); }
std::uint64_t projector_seed(std::uint64_t run_seed) { return stream_key(run_seed, 2); }
std::uint64_t library_seed(std::uint64_t run_seed) { return stream_key(run_seed, 3); }
std::uint64_t data_seed(std::uint64_t run_seed) { return stream_key(run_seed, 4); }

std::vector<double> TaskEpisode::routing_weights(double temperature) const {
  if (routing_losses.empty()) return {};
  return fusion_weights(routing_losses, temperature);
}

ContinualState::ContinualState(RunConfig cfg)
    : config(std::move(cfg)),
      backbone(config.feature_width, backbone_seed(config.seed)),
      projector(config.feature_width, projector_seed(config.seed)),
      library(config.library_config(), library_seed(config.seed)) {
  config.validate();
  threshold.mode = config.threshold_update_mode;
  rebuild_contrast_encoder();
}

void ContinualState::rebuild_contrast_encoder() {
  phi_ = MiniBackbone(config.feature_width, backbone_seed(config.seed)).frozen_copy();
}

DegradationSpec family_spec(const RunConfig& config, Family family) {
  DegradationSpec spec;
  spec.family = family;
  spec.seed = data_seed(config.seed);
  return spec;
}

std::uint64_t train_index(std::size_t episode, std::uint64_t i) {
  return (static_cast<std::uint64_t>(episode) << 32) + i;
}

std::uint64_t validation_index(Family family, std::uint64_t i) {
  return (1ull << 60) + (static_cast<std::uint64_t>(family) << 40) + i;
}

Batch make_batch(const DegradationSpec& spec, const std::vector<std::uint64_t>& indices,
                 std::size_t size) {
  std::vector<Tensor> degraded, clean;
  for (auto i : indices) {
    auto s = make_sample(spec, i, size);
    degraded.push_back(s.degraded);
    clean.push_back(s.clean);
  }
  return {stack_images(degraded), stack_images(clean)};
}

Batch validation_batch(const RunConfig& config, Family family) {
  std::vector<std::uint64_t> idx;
  for (std::size_t i = 0; i < config.eval_samples; ++i) idx.push_back(validation_index(family, i));
  return make_batch(family_spec(config, family), idx, config.image_size);
}

Tensor route_forward(const MiniBackbone& backbone, const ExpertLibrary& library,
                     const TaskEpisode& task, double temperature, const Tensor& degraded,
                     Tensor* fused_features) {
  Tensor features = backbone.encode(degraded);
  if (!task.experts.empty()) {
    features = library.fuse(task.experts, task.routing_weights(temperature), features);
  }
  if (fused_features) *fused_features = features;
  return backbone.decode(features, degraded);
}

Tensor predict(const ContinualState& state, const TaskEpisode& task, const Tensor& degraded) {
  const MiniBackbone frozen = state.backbone.frozen_copy();
  const ExpertLibrary lib = state.library.deep_copy();
  Tensor out = route_forward(frozen, lib, task, state.config.temperature, degraded);
  return clamp_detached(out, 0.0, 1.0);
}

QualityEntry evaluate(const ContinualState& state, const TaskEpisode& task, Family family) {
  const Batch val = validation_batch(state.config, family);
  const Tensor pred = predict(state, task, val.degraded);
  QualityEntry q;
  const std::size_t n = val.degraded.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor p = batch_item(pred, i);
    Tensor g = batch_item(val.clean, i);
    q.psnr += psnr(p, g);
    q.ssim += ssim(p, g);
  }
  q.psnr /= static_cast<double>(n);
  q.ssim /= static_cast<double>(n);
  return q;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// CSV sinks; inert when the run has no output directory.
class RunLog {
 public:
  explicit RunLog(const std::string& dir) {
    if (dir.empty()) return;
    std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    losses_.open(root / "losses.csv", std::ios::trunc);
    eval_.open(root / "eval.csv", std::ios::trunc);
    decisions_.open(root / "decisions.csv", std::ios::trunc);
    tasks_.open(root / "tasks.csv", std::ios::trunc);
    if (!losses_ || !eval_ || !decisions_ || !tasks_) {
      throw FormatError("cannot create run logs in " + dir);
    }
    losses_ << "step,task,l_sw,l_c,l_kd,l_p,l_reg,l_div,beta,total\n";
    eval_ << "after_task,eval_task,psnr,ssim,n_samples\n";
    decisions_ << "episode,family,decision,matched_task,task,s_cos,s_euc,s_pear,s_sum,threshold\n";
    tasks_ << "task,family,input_psnr,input_ssim,psnr,ssim,experts\n";
    enabled_ = true;
  }

  void loss(TaskId task, const LossBreakdown& b) {
    if (!enabled_) return;
    losses_ << b.step << ',' << task << ',' << num(b.l_sw) << ',' << num(b.l_c) << ','
            << num(b.l_kd) << ',' << num(b.l_p) << ',' << num(b.l_reg) << ',' << num(b.l_div)
            << ',' << num(b.beta_dynamic) << ',' << num(b.total) << '\n';
  }

  void eval(std::size_t after, std::size_t task, const QualityEntry& q, std::size_t n) {
    if (!enabled_) return;
    eval_ << after << ',' << task << ',' << num(q.psnr) << ',' << num(q.ssim) << ',' << n << '\n';
  }

  void decision(const EpisodeRecord& r) {
    if (!enabled_) return;
    const auto& d = r.decision;
    decisions_ << r.episode << ',' << to_string(r.family) << ','
               << (d.kind == TaskKind::New ? "new" : "old") << ','
               << (d.task ? std::to_string(*d.task) : "") << ','
               << (r.trained_task ? std::to_string(*r.trained_task) : "") << ','
               << num(r.similarity.s_cos) << ',' << num(r.similarity.s_euc) << ','
               << num(r.similarity.s_pear) << ',' << num(d.similarity) << ','
               << num(d.threshold) << '\n';
  }

  void task(const TaskEpisode& t) {
    if (!enabled_) return;
    std::string experts;
    for (auto id : t.experts) experts += (experts.empty() ? "" : " ") + std::to_string(id);
    const auto& q = t.eval_history.front();
    tasks_ << t.id << ',' << to_string(t.family) << ',' << num(t.input_psnr) << ','
           << num(t.input_ssim) << ',' << num(q.psnr) << ',' << num(q.ssim) << ',' << experts
           << '\n';
  }

  void flush() {
    if (!enabled_) return;
    for (auto* f : {&losses_, &eval_, &decisions_, &tasks_}) f->flush();
  }

 private:
  bool enabled_ = false;
  std::ofstream losses_, eval_, decisions_, tasks_;
};

Tensor gather_rows(const Tensor& batch, const std::vector<std::size_t>& rows) {
  std::vector<Tensor> items;
  for (auto r : rows) items.push_back(batch_item(batch, r));
  std::vector<double> data;
  for (const auto& t : items) data.insert(data.end(), t.data().begin(), t.data().end());
  return Tensor::from_data({rows.size(), batch.dim(1), batch.dim(2), batch.dim(3)},
                           std::move(data));
}

struct Onset {
  TaskVector mean;
  TaskVector spread;
};

Onset onset_signature(const ContinualState& state, const DegradationSpec& spec,
                      std::size_t episode) {
  const auto& cfg = state.config;
  const MiniBackbone encoder = state.backbone.frozen_copy();
  std::vector<TaskVector> vectors;
  for (std::size_t b = 0; b < cfg.onset_batches; ++b) {
    std::vector<std::uint64_t> idx;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      idx.push_back(train_index(episode, b * cfg.batch_size + i));
    }
    vectors.push_back(extract_task_vector(encoder.encode(make_batch(spec, idx, cfg.image_size).degraded)));
  }
  return {average_task_vectors(vectors), spread_of_task_vectors(vectors)};
}

bool backbone_trainable(const ContinualState& state) {
  if (!state.config.use_experts) return true;
  switch (state.config.freeze_policy) {
    case FreezePolicy::AllTrainable: return true;
    case FreezePolicy::Blending: return !state.backbone_trained;
    case FreezePolicy::AllFrozen: return false;
  }
  return false;
}

// Snapshot of the model before a new task starts; never mutated.
struct Teacher {
  MiniBackbone backbone;
  ExpertLibrary library;
  std::vector<TaskEpisode> tasks;
};

std::unique_ptr<Teacher> make_teacher(const ContinualState& state) {
  if (state.tasks.empty()) return nullptr;
  auto t = std::make_unique<Teacher>();
  t->backbone = state.backbone.frozen_copy();
  t->library = state.library.deep_copy();
  for (const auto& e : t->library.experts()) {
    const_cast<Adapter&>(e.params).set_trainable(false);
  }
  t->tasks = state.tasks;
  return t;
}

void train_new_task(ContinualState& state, TaskEpisode& ep, const ActiveSet& active,
                    std::size_t episode, RunLog& log) {
  const auto& cfg = state.config;
  const DegradationSpec spec = family_spec(cfg, ep.family);
  const LossWeights weights = cfg.loss_weights();
  const MiniBackbone& phi = state.contrast_encoder();
  const auto teacher = make_teacher(state);
  const bool use_teacher = teacher && (cfg.losses.distill || cfg.losses.projection);

  const bool train_backbone = backbone_trainable(state);
  state.backbone.set_trainable(train_backbone);
  const bool train_projector = use_teacher && cfg.losses.projection;
  state.projector.set_trainable(train_projector);

  std::vector<Tensor> params;
  if (train_backbone) {
    for (const auto& p : state.backbone.parameters()) params.push_back(p);
  }
  std::vector<const Adapter*> trainable_adapters;
  for (ExpertId id : active.trainable) {
    const auto& a = state.library.at(id).params;
    trainable_adapters.push_back(&a);
    for (const auto& p : a.parameters()) params.push_back(p);
  }
  if (train_projector) {
    for (const auto& p : state.projector.parameters()) params.push_back(p);
  }
  std::unique_ptr<Adam> opt;
  if (!params.empty()) {
    AdamHyper hyper;
    hyper.base_lr = cfg.learning_rate;
    opt = std::make_unique<Adam>(params, cfg.steps_per_task, hyper);
  }

  const std::size_t k = active.experts.size();
  std::vector<const Adapter*> adapters;
  for (ExpertId id : active.experts) adapters.push_back(&state.library.at(id).params);
  std::vector<double> window_sum(k, 0.0);
  std::size_t window_count = 0;
  const auto window_start =
      cfg.steps_per_task - static_cast<std::int64_t>(std::min<std::size_t>(
                               cfg.routing_window, static_cast<std::size_t>(cfg.steps_per_task)));

  for (std::int64_t step = 0; step < cfg.steps_per_task; ++step) {
    std::vector<std::uint64_t> idx;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      idx.push_back(train_index(episode, static_cast<std::uint64_t>(step) * cfg.batch_size + i));
    }
    const Batch batch = make_batch(spec, idx, cfg.image_size);
    const Tensor features = state.backbone.encode(batch.degraded);

    std::vector<Tensor> expert_out;
    std::vector<Tensor> solo_losses;
    std::vector<double> solo_values;
    for (const auto* a : adapters) {
      expert_out.push_back(a->forward(features));
      solo_losses.push_back(
          reconstruction_loss(state.backbone.decode(expert_out.back(), batch.degraded), batch.clean));
      solo_values.push_back(solo_losses.back().item());
    }
    std::vector<double> u;
    Tensor fused = features;
    if (k > 0) {
      u = fusion_weights(solo_values, cfg.temperature);
      fused = k == 1 ? expert_out.front() : weighted_sum(expert_out, u);
    }
    const Tensor pred = state.backbone.decode(fused, batch.degraded);

    LossParts parts;
    parts.sw = reconstruction_loss(pred, batch.clean);
    if (cfg.losses.contrast) parts.c = contrast_loss(pred, batch.clean, batch.degraded, phi);

    if (use_teacher) {
      const std::size_t n_prev = teacher->tasks.size();
      const auto& old = teacher->tasks[static_cast<std::size_t>(step) % n_prev];
      const std::size_t replay_n = old.replay_inputs.dim(0);
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        rows.push_back(((static_cast<std::size_t>(step) / n_prev) * cfg.batch_size + i) % replay_n);
      }
      const Tensor x_old = gather_rows(old.replay_inputs, rows);
      Tensor f_old;
      const Tensor pred_old = route_forward(teacher->backbone, teacher->library, old,
                                            cfg.temperature, x_old, &f_old);
      // Student: the live parameters under the old task's routing.
      Tensor f_new;
      const Tensor pred_new =
          route_forward(state.backbone, state.library, old, cfg.temperature, x_old, &f_new);
      if (cfg.losses.distill) {
        parts.kd = distillation_loss(pred_new, pred_old, x_old, phi, cfg.beta2);
      }
      if (cfg.losses.projection) parts.p = projection_loss(f_old, f_new, state.projector);
    }
    if (cfg.losses.regularization && !trainable_adapters.empty()) {
      parts.reg = adapter_regularization(trainable_adapters);
    }
    if (cfg.losses.diversity && k > 0) parts.div = diversity_loss(solo_losses);

    const TotalLoss total = total_loss(parts, cfg.losses, weights, step, cfg.steps_per_task);
    if (opt && total.value.requires_grad()) {
      total.value.backward();
      opt->step();
      opt->zero_grad();
    }

    for (std::size_t i = 0; i < k; ++i) {
      auto& rec = state.library.at(active.experts[i]);
      if (!rec.frozen || cfg.update_frozen_scores) ema_update(rec, solo_values[i]);
    }
    if (step >= window_start) {
      for (std::size_t i = 0; i < k; ++i) window_sum[i] += solo_values[i];
      ++window_count;
    }
    log.loss(ep.id, total.breakdown);
  }

  ep.routing_losses.clear();
  for (std::size_t i = 0; i < k; ++i) {
    ep.routing_losses.push_back(window_sum[i] / static_cast<double>(window_count));
  }
  state.backbone.set_trainable(false);
  state.projector.set_trainable(false);
  for (ExpertId id : active.trainable) state.library.at(id).params.set_trainable(false);
}

void run_episode(ContinualState& state, std::size_t episode, Family family, RunLog& log,
                 const ProgressFn& progress) {
  const auto& cfg = state.config;
  const DegradationSpec spec = family_spec(cfg, family);

  std::vector<RegisteredSignature> registry;
  for (const auto& t : state.tasks) registry.push_back({t.id, t.signature, t.signature_spread});
  const TaskVector candidate = onset_signature(state, spec, episode).mean;

  EpisodeRecord record;
  record.episode = episode;
  record.family = family;
  record.similarity = best_match(candidate, registry, cfg.signature_normalization);
  if (cfg.use_valve) {
    record.decision = classify_task(record.similarity, state.threshold, registry.size());
  } else {
    record.decision.kind = TaskKind::New;
    record.decision.similarity = registry.empty() ? 1.0 : record.similarity.s_sum;
    record.decision.threshold = state.threshold.current;
  }

  if (record.decision.kind == TaskKind::Old) {
    const TaskId matched = *record.decision.task;
    const TaskEpisode& old = state.tasks.at(static_cast<std::size_t>(matched));
    if (cfg.use_experts) {
      state.library.handle_task(record.decision, matched);
      if (cfg.old_task_score_refresh) {
        const Batch val = make_batch(spec, {train_index(episode, 0)}, cfg.image_size);
        const MiniBackbone frozen = state.backbone.frozen_copy();
        const Tensor f = frozen.encode(val.degraded);
        for (ExpertId id : old.experts) {
          auto& rec = state.library.at(id);
          const double loss = reconstruction_loss(
              frozen.decode(rec.params.deep_copy().forward(f), val.degraded), val.clean).item();
          // Score refresh only; the use was already counted by handle_task.
          const auto uses = rec.usage_count;
          ema_update(rec, loss);
          rec.usage_count = uses;
        }
      }
    }
    record.quality = evaluate(state, old, family);
    state.episodes.push_back(record);
    log.decision(record);
    if (progress) {
      progress("episode " + std::to_string(episode) + " (" + to_string(family) + "): old, task " +
               std::to_string(matched) + ", psnr " + num(record.quality.psnr));
    }
    return;
  }

  TaskEpisode ep;
  ep.id = static_cast<TaskId>(state.tasks.size());
  ep.family = family;
  ActiveSet active;
  if (cfg.use_experts) active = state.library.handle_task(record.decision, ep.id);
  ep.experts = active.experts;

  train_new_task(state, ep, active, episode, log);

  std::vector<std::uint64_t> replay_idx;
  for (std::size_t i = 0; i < cfg.replay_size; ++i) replay_idx.push_back(train_index(episode, i));
  const Batch replay = make_batch(spec, replay_idx, cfg.image_size);
  ep.replay_inputs = replay.degraded;
  ep.replay_targets = replay.clean;
  // Re-measured with the backbone the task will be recognised with later.
  const Onset onset = onset_signature(state, spec, episode);
  ep.signature = onset.mean;
  ep.signature_spread = onset.spread;

  if (cfg.use_experts && cfg.freeze_policy != FreezePolicy::AllTrainable) {
    state.library.freeze_task_experts(ep.id);
  }
  state.backbone_trained = true;

  const Batch val = validation_batch(cfg, family);
  for (std::size_t i = 0; i < val.degraded.dim(0); ++i) {
    Tensor d = batch_item(val.degraded, i);
    Tensor c = batch_item(val.clean, i);
    ep.input_psnr += psnr(d, c);
    ep.input_ssim += ssim(d, c);
  }
  ep.input_psnr /= static_cast<double>(val.degraded.dim(0));
  ep.input_ssim /= static_cast<double>(val.degraded.dim(0));
  state.tasks.push_back(std::move(ep));

  std::vector<QualityEntry> row;
  for (auto& t : state.tasks) {
    QualityEntry q = evaluate(state, t, t.family);
    t.eval_history.push_back(q);
    row.push_back(q);
    log.eval(state.tasks.size() - 1, static_cast<std::size_t>(t.id), q, cfg.eval_samples);
  }
  state.forgetting.add_row(row);
  record.trained_task = state.tasks.back().id;
  record.quality = row.back();
  state.episodes.push_back(record);
  log.decision(record);
  log.task(state.tasks.back());
  log.flush();
  if (progress) {
    progress("episode " + std::to_string(episode) + " (" + to_string(family) + "): new task " +
             std::to_string(state.tasks.back().id) + ", psnr " + num(row.back().psnr) +
             " (input " + num(state.tasks.back().input_psnr) + ")");
  }
}

}  // namespace

ContinualState train_stream(const RunConfig& config, const ProgressFn& progress) {
  ContinualState state(config);
  RunLog log(config.output_dir);
  for (std::size_t e = 0; e < config.tasks.size(); ++e) {
    run_episode(state, e, config.tasks[e], log, progress);
  }
  return state;
}

RunResult run_continual(const RunConfig& config, const ProgressFn& progress) {
  config.validate();
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    std::ofstream(std::filesystem::path(config.output_dir) / "config.json", std::ios::trunc)
        << config_to_json_text(config) << '\n';
  }
  ContinualState state = train_stream(config, progress);

  RunResult result;
  result.output_dir = config.output_dir;
  result.episodes = state.episodes;
  result.forgetting = state.forgetting;
  result.experts_allocated = state.library.size();
  for (ExpertId id : state.library.verify_frozen()) {
    result.frozen_digest_failures.push_back("expert " + std::to_string(id));
  }
  if (!config.output_dir.empty()) {
    save_checkpoint(state, std::filesystem::path(config.output_dir) / "checkpoint");
    nlohmann::json summary;
    summary["episodes"] = state.episodes.size();
    summary["tasks"] = state.tasks.size();
    summary["experts"] = state.library.size();
    summary["threshold"] = state.threshold.current;
    summary["frozen_digest_failures"] = result.frozen_digest_failures;
    if (state.forgetting.tasks() >= 2) {
      const auto f = forgetting_report(state.forgetting);
      summary["forgetting"] = {{"per_task", f.per_task}, {"min", f.min}, {"mean", f.mean}};
    }
    std::ofstream(std::filesystem::path(config.output_dir) / "summary.json", std::ios::trunc)
        << summary.dump(2) << '\n';
  }
  if (!result.frozen_digest_failures.empty()) {
    throw Error("frozen expert digest mismatch after run: " + result.frozen_digest_failures.front());
  }
  return result;
}

}  // namespace delnet
