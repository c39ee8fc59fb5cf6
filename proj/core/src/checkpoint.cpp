#include "delnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "delnet/error.hpp"
#include "delnet/tensor_io.hpp"
#include "json.hpp"

namespace delnet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class BlobWriter {
 public:
  explicit BlobWriter(fs::path dir) : dir_(std::move(dir)) {}

  json put(const std::string& name, const Tensor& t) {
    const std::string file = name + ".dlt";
    write_dlt(dir_ / file, t);
    return file;
  }

  json put_all(const std::string& prefix, const std::vector<Tensor>& ts) {
    json files = json::array();
    for (std::size_t i = 0; i < ts.size(); ++i) files.push_back(put(prefix + "_" + std::to_string(i), ts[i]));
    return files;
  }

 private:
  fs::path dir_;
};

class BlobReader {
 public:
  explicit BlobReader(fs::path dir) : dir_(std::move(dir)) {}

  Tensor get(const json& name) const {
    const auto file = name.get<std::string>();
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
      throw FormatError("checkpoint blob name '" + file + "' is not a plain file name");
    }
    return read_dlt(dir_ / file);
  }

  std::vector<Tensor> get_all(const json& names) const {
    std::vector<Tensor> out;
    for (const auto& n : names) out.push_back(get(n));
    return out;
  }

 private:
  fs::path dir_;
};

json quality_json(const QualityEntry& q) { return json::array({q.psnr, q.ssim}); }
QualityEntry quality_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

json decision_json(const EpisodeRecord& r) {
  const auto& d = r.decision;
  const auto& s = r.similarity;
  return {{"episode", r.episode},
          {"family", to_string(r.family)},
          {"kind", d.kind == TaskKind::New ? "new" : "old"},
          {"task", optional_json(d.task)},
          {"similarity", d.similarity},
          {"threshold", d.threshold},
          {"ambiguous", d.ambiguous},
          {"s_cos", s.s_cos},
          {"s_euc", s.s_euc},
          {"s_pear", s.s_pear},
          {"s_sum", s.s_sum},
          {"best_match", optional_json(s.best_match_task)},
          {"trained_task", optional_json(r.trained_task)},
          {"quality", quality_json(r.quality)}};
}

EpisodeRecord decision_from(const json& j) {
  EpisodeRecord r;
  r.episode = j.at("episode").get<std::size_t>();
  r.family = family_from_string(j.at("family").get<std::string>());
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "new" && kind != "old") throw FormatError("unknown decision kind '" + kind + "'");
  r.decision.kind = kind == "new" ? TaskKind::New : TaskKind::Old;
  r.decision.task = optional_from<TaskId>(j.at("task"));
  r.decision.similarity = j.at("similarity").get<double>();
  r.decision.threshold = j.at("threshold").get<double>();
  r.decision.ambiguous = j.at("ambiguous").get<bool>();
  r.similarity.s_cos = j.at("s_cos").get<double>();
  r.similarity.s_euc = j.at("s_euc").get<double>();
  r.similarity.s_pear = j.at("s_pear").get<double>();
  r.similarity.s_sum = j.at("s_sum").get<double>();
  r.similarity.best_match_task = optional_from<TaskId>(j.at("best_match"));
  r.trained_task = optional_from<TaskId>(j.at("trained_task"));
  r.quality = quality_from(j.at("quality"));
  return r;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ContinualState load_from_manifest(const json& m, const BlobReader& blobs) {
  const int version = m.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  RunConfig config = config_from_json_text(m.at("config").dump());
  ContinualState state(config);

  state.backbone.set_parameters(blobs.get_all(m.at("backbone")));
  state.projector.set_parameters(blobs.get_all(m.at("projector")));
  state.backbone_trained = m.at("backbone_trained").get<bool>();

  const auto& th = m.at("threshold");
  state.threshold.current = th.at("current").get<double>();
  state.threshold.history = th.at("history").get<std::vector<double>>();
  state.threshold.mode = threshold_update_mode_from_string(th.at("mode").get<std::string>());

  const auto& lib = m.at("library");
  std::vector<ExpertRecord> experts;
  for (const auto& e : lib.at("experts")) {
    ExpertRecord rec;
    rec.id = e.at("id").get<ExpertId>();
    rec.params.set_parameters(blobs.get_all(e.at("params")));
    rec.performance = e.at("performance").get<double>();
    rec.usage_count = e.at("usage_count").get<std::int64_t>();
    rec.frozen = e.at("frozen").get<bool>();
    for (const auto& t : e.at("owner_tasks")) rec.owner_tasks.insert(t.get<TaskId>());
    if (!e.at("frozen_digest").is_null()) {
      rec.frozen_digest = std::stoull(e.at("frozen_digest").get<std::string>(), nullptr, 16);
    }
    experts.push_back(std::move(rec));
  }
  state.library.restore(std::move(experts), lib.at("next_id").get<ExpertId>(),
                        lib.at("rng_counter").get<std::uint64_t>());

  for (const auto& t : m.at("tasks")) {
    TaskEpisode ep;
    ep.id = t.at("id").get<TaskId>();
    ep.family = family_from_string(t.at("family").get<std::string>());
    const auto sig = t.at("signature").get<std::vector<double>>();
    if (sig.size() != ep.signature.stats.size()) throw FormatError("task signature has wrong length");
    std::copy(sig.begin(), sig.end(), ep.signature.stats.begin());
    const auto spread = t.at("signature_spread").get<std::vector<double>>();
    if (spread.size() != ep.signature_spread.stats.size()) {
      throw FormatError("task signature spread has wrong length");
    }
    std::copy(spread.begin(), spread.end(), ep.signature_spread.stats.begin());
    ep.experts = t.at("experts").get<std::vector<ExpertId>>();
    ep.routing_losses = t.at("routing_losses").get<std::vector<double>>();
    ep.replay_inputs = blobs.get(t.at("replay_inputs"));
    ep.replay_targets = blobs.get(t.at("replay_targets"));
    for (const auto& q : t.at("eval_history")) ep.eval_history.push_back(quality_from(q));
    ep.input_psnr = t.at("input_psnr").get<double>();
    ep.input_ssim = t.at("input_ssim").get<double>();
    for (ExpertId id : ep.experts) {
      if (!state.library.contains(id)) throw FormatError("task references unknown expert");
    }
    state.tasks.push_back(std::move(ep));
  }
  for (const auto& row : m.at("forgetting")) {
    std::vector<QualityEntry> entries;
    for (const auto& q : row) entries.push_back(quality_from(q));
    state.forgetting.add_row(std::move(entries));
  }
  for (const auto& r : m.at("episodes")) state.episodes.push_back(decision_from(r));
  return state;
}

}  // namespace

Tensor checkpoint_probe(const ContinualState& state) {
  if (state.tasks.empty()) throw Error("checkpoint has no trained task to probe");
  const TaskEpisode& task = state.tasks.back();
  RunConfig cfg = state.config;
  cfg.eval_samples = cfg.batch_size;
  return predict(state, task, validation_batch(cfg, task.family).degraded);
}

void save_checkpoint(const ContinualState& state, const fs::path& dir) {
  fs::create_directories(dir);
  BlobWriter blobs(dir);
  json m;
  m["format_version"] = kCheckpointVersion;
  m["config"] = json::parse(config_to_json_text(state.config));
  m["backbone"] = blobs.put_all("backbone", state.backbone.parameters());
  m["projector"] = blobs.put_all("projector", state.projector.parameters());
  m["backbone_trained"] = state.backbone_trained;
  m["threshold"] = {{"current", state.threshold.current},
                    {"history", state.threshold.history},
                    {"mode", to_string(state.threshold.mode)}};

  json experts = json::array();
  for (const auto& e : state.library.experts()) {
    experts.push_back(
        {{"id", e.id},
         {"params", blobs.put_all("expert_" + std::to_string(e.id), e.params.parameters())},
         {"performance", e.performance},
         {"usage_count", e.usage_count},
         {"frozen", e.frozen},
         {"owner_tasks", e.owner_tasks},
         {"frozen_digest", e.frozen_digest ? json(digest_hex(*e.frozen_digest)) : json(nullptr)}});
  }
  m["library"] = {{"next_id", state.library.next_id()},
                  {"rng_counter", state.library.rng_counter()},
                  {"experts", experts}};

  json tasks = json::array();
  for (const auto& t : state.tasks) {
    const std::string prefix = "task_" + std::to_string(t.id);
    json history = json::array();
    for (const auto& q : t.eval_history) history.push_back(quality_json(q));
    tasks.push_back({{"id", t.id},
                     {"family", to_string(t.family)},
                     {"signature", t.signature.stats},
                     {"signature_spread", t.signature_spread.stats},
                     {"experts", t.experts},
                     {"routing_losses", t.routing_losses},
                     {"replay_inputs", blobs.put(prefix + "_replay_inputs", t.replay_inputs)},
                     {"replay_targets", blobs.put(prefix + "_replay_targets", t.replay_targets)},
                     {"eval_history", history},
                     {"input_psnr", t.input_psnr},
                     {"input_ssim", t.input_ssim}});
  }
  m["tasks"] = tasks;

  json forgetting = json::array();
  for (const auto& row : state.forgetting.rows()) {
    json r = json::array();
    for (const auto& q : row) r.push_back(quality_json(q));
    forgetting.push_back(r);
  }
  m["forgetting"] = forgetting;
  json episodes = json::array();
  for (const auto& r : state.episodes) episodes.push_back(decision_json(r));
  m["episodes"] = episodes;
  m["probe"] = state.tasks.empty() ? json(nullptr) : blobs.put("probe", checkpoint_probe(state));

  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << m.dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
}

ContinualState load_checkpoint(const fs::path& dir) {
  json m;
  try {
    m = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::parse_error&) {
    throw FormatError("checkpoint manifest " + (dir / "manifest.json").string() +
                      " is truncated or malformed");
  }
  try {
    return load_from_manifest(m, BlobReader(dir));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is incomplete: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }
}

VerifyReport checkpoint_roundtrip(const fs::path& dir) {
  VerifyReport report;
  const ContinualState state = load_checkpoint(dir);
  for (ExpertId id : state.library.verify_frozen()) {
    report.problems.push_back("digest mismatch for expert " + std::to_string(id));
  }
  if (!state.tasks.empty()) {
    const Tensor stored = read_dlt(dir / "probe.dlt");
    if (!checkpoint_probe(state).bit_equal(stored)) {
      report.problems.push_back("restored eval output differs from the saved probe");
    }
  }
  report.ok = report.problems.empty();
  return report;
}

}  // namespace delnet
