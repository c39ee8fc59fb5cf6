#include "delnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "delnet/error.hpp"
#include "json.hpp"

namespace delnet {

using nlohmann::json;

void RunConfig::validate() const {
  auto positive = [](auto v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
  };
  if (tasks.empty()) throw ConfigError("task sequence must not be empty");
  positive(steps_per_task, "steps_per_task");
  positive(batch_size, "batch_size");
  positive(feature_width, "feature_width");
  positive(adapter_reduction, "adapter_reduction");
  positive(expert_capacity, "expert_capacity");
  positive(k_new, "k_new");
  positive(learning_rate, "learning_rate");
  positive(temperature, "temperature");
  positive(onset_batches, "onset_batches");
  positive(replay_size, "replay_size");
  positive(eval_samples, "eval_samples");
  positive(routing_window, "routing_window");
  if (image_size < 11) throw ConfigError("image_size must be at least 11 (SSIM window)");
  if (feature_width % 4 != 0) throw ConfigError("feature_width must be divisible by 4");
  if (feature_width / adapter_reduction == 0) {
    throw ConfigError("adapter_reduction leaves no hidden channels");
  }
  if (beta1 < 0 || beta2 < 0) throw ConfigError("beta1 and beta2 must be non-negative");
}

LossWeights RunConfig::loss_weights() const {
  LossWeights w;
  w.beta1 = beta1;
  w.beta2 = beta2;
  return w;
}

LibraryConfig RunConfig::library_config() const {
  LibraryConfig c;
  c.channels = feature_width;
  c.reduction = adapter_reduction;
  c.capacity = expert_capacity;
  c.k_transfer = k_transfer;
  c.k_new = k_new;
  c.temperature = temperature;
  c.freeze_policy = freeze_policy;
  c.update_frozen_scores = update_frozen_scores;
  return c;
}

namespace {

const std::set<std::string> kLossKeys{"contrast", "distill", "projection", "regularization",
                                      "diversity"};

template <class T>
T get_as(const json& j, const std::string& key) {
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    if (!j.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
        throw ConfigError("config key '" + key + "' must not be negative");
      }
    }
  }
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  }
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "tasks") {
      c.tasks.clear();
      for (const auto& t : get_as<std::vector<std::string>>(value, key)) {
        c.tasks.push_back(family_from_string(t));
      }
    } else if (key == "steps_per_task") {
      c.steps_per_task = get_as<std::int64_t>(value, key);
    } else if (key == "batch_size") {
      c.batch_size = get_as<std::size_t>(value, key);
    } else if (key == "image_size") {
      c.image_size = get_as<std::size_t>(value, key);
    } else if (key == "feature_width") {
      c.feature_width = get_as<std::size_t>(value, key);
    } else if (key == "adapter_reduction") {
      c.adapter_reduction = get_as<std::size_t>(value, key);
    } else if (key == "expert_capacity") {
      c.expert_capacity = get_as<std::size_t>(value, key);
    } else if (key == "k_transfer") {
      c.k_transfer = get_as<std::size_t>(value, key);
    } else if (key == "k_new") {
      c.k_new = get_as<std::size_t>(value, key);
    } else if (key == "freeze_policy") {
      c.freeze_policy = freeze_policy_from_string(get_as<std::string>(value, key));
    } else if (key == "threshold_update_mode") {
      c.threshold_update_mode = threshold_update_mode_from_string(get_as<std::string>(value, key));
    } else if (key == "signature_normalization") {
      c.signature_normalization =
          signature_normalization_from_string(get_as<std::string>(value, key));
    } else if (key == "losses") {
      if (!value.is_object()) throw ConfigError("'losses' must be an object");
      for (const auto& [name, flag] : value.items()) {
        if (!kLossKeys.count(name)) throw ConfigError("unknown loss toggle '" + name + "'");
        const bool on = get_as<bool>(flag, "losses." + name);
        if (name == "contrast") c.losses.contrast = on;
        if (name == "distill") c.losses.distill = on;
        if (name == "projection") c.losses.projection = on;
        if (name == "regularization") c.losses.regularization = on;
        if (name == "diversity") c.losses.diversity = on;
      }
    } else if (key == "beta1") {
      c.beta1 = get_as<double>(value, key);
    } else if (key == "beta2") {
      c.beta2 = get_as<double>(value, key);
    } else if (key == "learning_rate") {
      c.learning_rate = get_as<double>(value, key);
    } else if (key == "temperature") {
      c.temperature = get_as<double>(value, key);
    } else if (key == "seed") {
      c.seed = get_as<std::uint64_t>(value, key);
    } else if (key == "onset_batches") {
      c.onset_batches = get_as<std::size_t>(value, key);
    } else if (key == "replay_size") {
      c.replay_size = get_as<std::size_t>(value, key);
    } else if (key == "eval_samples") {
      c.eval_samples = get_as<std::size_t>(value, key);
    } else if (key == "routing_window") {
      c.routing_window = get_as<std::size_t>(value, key);
    } else if (key == "use_valve") {
      c.use_valve = get_as<bool>(value, key);
    } else if (key == "use_experts") {
      c.use_experts = get_as<bool>(value, key);
    } else if (key == "update_frozen_scores") {
      c.update_frozen_scores = get_as<bool>(value, key);
    } else if (key == "old_task_score_refresh") {
      c.old_task_score_refresh = get_as<bool>(value, key);
    } else if (key == "output_dir") {
      c.output_dir = get_as<std::string>(value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string config_to_json_text(const RunConfig& c) {
  json doc;
  std::vector<std::string> tasks;
  for (auto f : c.tasks) tasks.push_back(to_string(f));
  doc["tasks"] = tasks;
  doc["steps_per_task"] = c.steps_per_task;
  doc["batch_size"] = c.batch_size;
  doc["image_size"] = c.image_size;
  doc["feature_width"] = c.feature_width;
  doc["adapter_reduction"] = c.adapter_reduction;
  doc["expert_capacity"] = c.expert_capacity;
  doc["k_transfer"] = c.k_transfer;
  doc["k_new"] = c.k_new;
  doc["freeze_policy"] = to_string(c.freeze_policy);
  doc["threshold_update_mode"] = to_string(c.threshold_update_mode);
  doc["signature_normalization"] = to_string(c.signature_normalization);
  doc["losses"] = {{"contrast", c.losses.contrast},
                   {"distill", c.losses.distill},
                   {"projection", c.losses.projection},
                   {"regularization", c.losses.regularization},
                   {"diversity", c.losses.diversity}};
  doc["beta1"] = c.beta1;
  doc["beta2"] = c.beta2;
  doc["learning_rate"] = c.learning_rate;
  doc["temperature"] = c.temperature;
  doc["seed"] = c.seed;
  doc["onset_batches"] = c.onset_batches;
  doc["replay_size"] = c.replay_size;
  doc["eval_samples"] = c.eval_samples;
  doc["routing_window"] = c.routing_window;
  doc["use_valve"] = c.use_valve;
  doc["use_experts"] = c.use_experts;
  doc["update_frozen_scores"] = c.update_frozen_scores;
  doc["old_task_score_refresh"] = c.old_task_score_refresh;
  doc["output_dir"] = c.output_dir;
  return doc.dump(2);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

}  // namespace delnet
