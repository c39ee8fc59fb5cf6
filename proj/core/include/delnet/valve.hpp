#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "delnet/tensor.hpp"

namespace delnet {

using TaskId = std::int64_t;

/// Seven-number statistics signature of a feature map, in the fixed order
/// mean, std, max, min, l2_norm, skewness, kurtosis. Moments are population
/// moments; kurtosis is excess kurtosis.
struct TaskVector {
  static constexpr std::size_t kSize = 7;
  std::array<double, kSize> stats{};

  double mean() const { return stats[0]; }
  double std() const { return stats[1]; }
  double max() const { return stats[2]; }
  double min() const { return stats[3]; }
  double l2_norm() const { return stats[4]; }
  double skewness() const { return stats[5]; }
  double kurtosis() const { return stats[6]; }

  bool operator==(const TaskVector&) const = default;
};

TaskVector extract_task_vector(std::span<const double> values);
TaskVector extract_task_vector(const Tensor& features);
/// Componentwise mean of several signatures.
TaskVector average_task_vectors(std::span<const TaskVector> vectors);

struct SimilarityWeights {
  double cosine = 0.5;
  double euclidean = 0.3;
  double pearson = 0.2;
};

struct SimilarityReport {
  double s_cos = 0.0;
  double s_euc = 0.0;
  double s_pear = 0.0;
  double s_sum = 0.0;
  std::optional<TaskId> best_match_task;
};

/// Cosine similarity; 0 when either operand is the zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
/// Pearson correlation over paired entries; 0 when either has zero variance.
double pearson_similarity(std::span<const double> a, std::span<const double> b);
double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// a·S_cos + b·S_euc + c·S_pear.
double combine_similarity(double s_cos, double s_euc, double s_pear,
                          const SimilarityWeights& weights = {});

SimilarityReport combined_similarity(const TaskVector& t1, const TaskVector& t2,
                                     const SimilarityWeights& weights = {});

enum class SignatureNormalization { WithinTask, RegistryZ, Raw };

/// Componentwise population std of several signatures.
TaskVector spread_of_task_vectors(std::span<const TaskVector> vectors);

struct RegisteredSignature {
  TaskId task;
  TaskVector vector;
  TaskVector spread;  // batch-to-batch spread of the onset signature
};

/// Maps signatures into the space where similarities are measured.
///
/// WithinTask divides each dimension by the registry's mean onset spread and
/// leaves the origin in place. RegistryZ z-scores each dimension against the
/// mean and population std of the registered signatures. Any dimension whose
/// scale is (near-)zero, and RegistryZ with fewer than two signatures, falls
/// back to dividing by the registry's mean absolute value. Raw is identity.
class SignatureSpace {
 public:
  SignatureSpace(SignatureNormalization mode, std::span<const RegisteredSignature> registry);
  std::array<double, TaskVector::kSize> map(const TaskVector& v) const;

 private:
  SignatureNormalization mode_;
  std::array<double, TaskVector::kSize> center_{};
  std::array<double, TaskVector::kSize> scale_{};
};

/// Best (maximum s_sum) match of `candidate` against every registered
/// signature after normalization. Ties go to the earlier registration.
SimilarityReport best_match(const TaskVector& candidate,
                            std::span<const RegisteredSignature> registry,
                            SignatureNormalization mode, const SimilarityWeights& weights = {});

enum class ThresholdUpdateMode { Delta, Literal };

std::string to_string(ThresholdUpdateMode mode);
ThresholdUpdateMode threshold_update_mode_from_string(const std::string& name);
std::string to_string(SignatureNormalization mode);
SignatureNormalization signature_normalization_from_string(const std::string& name);

/// Adaptive old/new decision boundary.
struct ThresholdState {
  static constexpr double kInitial = 0.75;
  static constexpr double kLower = 0.65;
  static constexpr double kUpper = 0.90;
  static constexpr double kHardOld = 0.85;
  static constexpr double kHardNew = 0.5;
  static constexpr double kRate = 0.05;   // e
  static constexpr double kBound = 0.05;  // f

  double current = kInitial;
  std::vector<double> history;  // ambiguous-band similarities, append-only
  ThresholdUpdateMode mode = ThresholdUpdateMode::Delta;
};

/// Even-length median is the mean of the middle pair.
double median(std::vector<double> values);
double population_std(std::span<const double> values);

/// One threshold step from the current history. Requires > 3 samples.
void update_threshold(ThresholdState& state);

enum class TaskKind { New, Old };

struct TaskDecision {
  TaskKind kind = TaskKind::New;
  std::optional<TaskId> task;  // set for Old
  double similarity = 0.0;     // the s_sum the decision was based on
  double threshold = 0.0;      // boundary in force when deciding
  bool ambiguous = false;
};

/// Decision rules: nothing registered → New with similarity 1.0;
/// s > 0.85 → Old; s < 0.5 → New; otherwise Old iff s ≥ current threshold.
/// Ambiguous observations are appended to the history afterwards and
/// update the threshold once more than three have accumulated.
TaskDecision classify_task(const SimilarityReport& report, ThresholdState& state,
                           std::size_t registered_count);

}  // namespace delnet
