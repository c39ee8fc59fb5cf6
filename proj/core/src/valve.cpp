#include "delnet/valve.hpp"

#include <algorithm>
#include <cmath>

#include "delnet/error.hpp"

namespace delnet {

TaskVector extract_task_vector(std::span<const double> values) {
  if (values.empty()) {
    throw ShapeError("extract_task_vector: empty feature map");
  }
  const double n = static_cast<double>(values.size());
  double total = 0.0;
  double squares = 0.0;
  double hi = values[0];
  double lo = values[0];
  for (double v : values) {
    total += v;
    squares += v * v;
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  const double mu = total / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mu;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sigma = std::sqrt(m2);
  TaskVector t;
  t.stats = {mu, sigma, hi, lo, std::sqrt(squares), 0.0, 0.0};
  if (sigma >= 1e-12) {
    t.stats[5] = m3 / (sigma * sigma * sigma);
    t.stats[6] = m4 / (m2 * m2) - 3.0;
  }
  for (double s : t.stats) {
    if (!std::isfinite(s)) throw NumericError("extract_task_vector: non-finite statistic");
  }
  return t;
}

TaskVector extract_task_vector(const Tensor& features) { return extract_task_vector(features.data()); }

TaskVector average_task_vectors(std::span<const TaskVector> vectors) {
  if (vectors.empty()) {
    throw ShapeError("average_task_vectors: no vectors");
  }
  TaskVector avg;
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < TaskVector::kSize; ++k) avg.stats[k] += v.stats[k];
  }
  for (auto& s : avg.stats) s /= static_cast<double>(vectors.size());
  return avg;
}

TaskVector spread_of_task_vectors(std::span<const TaskVector> vectors) {
  const TaskVector mean = average_task_vectors(vectors);
  TaskVector spread;
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < TaskVector::kSize; ++k) {
      const double d = v.stats[k] - mean.stats[k];
      spread.stats[k] += d * d;
    }
  }
  for (auto& s : spread.stats) s = std::sqrt(s / static_cast<double>(vectors.size()));
  return spread;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double pearson_similarity(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    cov += (a[k] - ma) * (b[k] - mb);
    va += (a[k] - ma) * (a[k] - ma);
    vb += (b[k] - mb) * (b[k] - mb);
  }
  if (va < 1e-300 || vb < 1e-300) return 0.0;
  return std::clamp(cov / (std::sqrt(va) * std::sqrt(vb)), -1.0, 1.0);
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(acc);
}

double combine_similarity(double s_cos, double s_euc, double s_pear,
                          const SimilarityWeights& weights) {
  return weights.cosine * s_cos + weights.euclidean * s_euc + weights.pearson * s_pear;
}

namespace {

SimilarityReport similarity_of(std::span<const double> a, std::span<const double> b,
                               const SimilarityWeights& weights) {
  SimilarityReport r;
  r.s_cos = cosine_similarity(a, b);
  r.s_euc = 1.0 / (1.0 + euclidean_distance(a, b));
  r.s_pear = pearson_similarity(a, b);
  r.s_sum = combine_similarity(r.s_cos, r.s_euc, r.s_pear, weights);
  return r;
}

}  // namespace

SimilarityReport combined_similarity(const TaskVector& t1, const TaskVector& t2,
                                     const SimilarityWeights& weights) {
  return similarity_of(t1.stats, t2.stats, weights);
}

SignatureSpace::SignatureSpace(SignatureNormalization mode,
                               std::span<const RegisteredSignature> registry)
    : mode_(mode) {
  center_.fill(0.0);
  scale_.fill(1.0);
  if (mode_ == SignatureNormalization::Raw || registry.empty()) return;
  const double n = static_cast<double>(registry.size());
  for (std::size_t k = 0; k < TaskVector::kSize; ++k) {
    double mu = 0.0, magnitude = 0.0, within = 0.0;
    for (const auto& r : registry) {
      mu += r.vector.stats[k];
      magnitude += std::abs(r.vector.stats[k]);
      within += r.spread.stats[k];
    }
    mu /= n;
    magnitude /= n;
    within /= n;
    const double floor = 1e-9 * std::max(1.0, magnitude);
    if (mode_ == SignatureNormalization::WithinTask) {
      scale_[k] = within > floor ? within : std::max(magnitude, 1e-12);
      continue;
    }
    double var = 0.0;
    for (const auto& r : registry) var += (r.vector.stats[k] - mu) * (r.vector.stats[k] - mu);
    const double spread = std::sqrt(var / n);
    if (registry.size() >= 2 && spread > floor) {
      center_[k] = mu;
      scale_[k] = spread;
    } else {
      scale_[k] = std::max(magnitude, 1e-12);
    }
  }
}

std::array<double, TaskVector::kSize> SignatureSpace::map(const TaskVector& v) const {
  std::array<double, TaskVector::kSize> out{};
  for (std::size_t k = 0; k < TaskVector::kSize; ++k) {
    out[k] = (v.stats[k] - center_[k]) / scale_[k];
  }
  return out;
}

SimilarityReport best_match(const TaskVector& candidate,
                            std::span<const RegisteredSignature> registry,
                            SignatureNormalization mode, const SimilarityWeights& weights) {
  SimilarityReport best;
  if (registry.empty()) return best;
  const SignatureSpace space(mode, registry);
  const auto c = space.map(candidate);
  bool first = true;
  for (const auto& r : registry) {
    const auto mapped = space.map(r.vector);
    auto report = similarity_of(c, mapped, weights);
    if (first || report.s_sum > best.s_sum) {
      best = report;
      best.best_match_task = r.task;
      first = false;
    }
  }
  return best;
}

std::string to_string(ThresholdUpdateMode mode) {
  return mode == ThresholdUpdateMode::Delta ? "delta" : "literal";
}

ThresholdUpdateMode threshold_update_mode_from_string(const std::string& name) {
  if (name == "delta") return ThresholdUpdateMode::Delta;
  if (name == "literal") return ThresholdUpdateMode::Literal;
  throw ConfigError("unknown threshold_update_mode '" + name + "'");
}

std::string to_string(SignatureNormalization mode) {
  switch (mode) {
    case SignatureNormalization::WithinTask: return "within_task";
    case SignatureNormalization::RegistryZ: return "registry_z";
    case SignatureNormalization::Raw: return "raw";
  }
  return "?";
}

SignatureNormalization signature_normalization_from_string(const std::string& name) {
  if (name == "within_task") return SignatureNormalization::WithinTask;
  if (name == "registry_z") return SignatureNormalization::RegistryZ;
  if (name == "raw") return SignatureNormalization::Raw;
  throw ConfigError("unknown signature_normalization '" + name + "'");
}

double median(std::vector<double> values) {
  if (values.empty()) {
    throw Error("median of an empty list");
  }
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double population_std(std::span<const double> values) {
  if (values.empty()) {
    throw Error("population_std of an empty list");
  }
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  return std::sqrt(var / static_cast<double>(values.size()));
}

void update_threshold(ThresholdState& state) {
  if (state.history.size() <= 3) {
    throw Error("update_threshold needs more than three similarity samples, have " +
                std::to_string(state.history.size()));
  }
  const double target = median(state.history) - 0.25 * population_std(state.history);
  const double operand =
      state.mode == ThresholdUpdateMode::Delta ? target - state.current : target;
  const double step = std::clamp(operand, -ThresholdState::kBound, ThresholdState::kBound);
  state.current = std::clamp(state.current + ThresholdState::kRate * step, ThresholdState::kLower,
                             ThresholdState::kUpper);
}

TaskDecision classify_task(const SimilarityReport& report, ThresholdState& state,
                           std::size_t registered_count) {
  TaskDecision d;
  d.threshold = state.current;
  if (registered_count == 0) {
    d.kind = TaskKind::New;
    d.similarity = 1.0;
    return d;
  }
  d.similarity = report.s_sum;
  if (report.s_sum > ThresholdState::kHardOld) {
    d.kind = TaskKind::Old;
  } else if (report.s_sum < ThresholdState::kHardNew) {
    d.kind = TaskKind::New;
  } else {
    d.ambiguous = true;
    d.kind = report.s_sum >= state.current ? TaskKind::Old : TaskKind::New;
    state.history.push_back(report.s_sum);
    if (state.history.size() > 3) update_threshold(state);
  }
  if (d.kind == TaskKind::Old) {
    if (!report.best_match_task) {
      throw Error("classify_task: Old decision without a matched task");
    }
    d.task = report.best_match_task;
  }
  return d;
}

}  // namespace delnet
