#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delnet/backbone.hpp"
#include "delnet/tensor.hpp"
#include "delnet/valve.hpp"

namespace delnet {

enum class Family { Haze, Rain, Snow };

inline constexpr Family kAllFamilies[] = {Family::Haze, Family::Rain, Family::Snow};

std::string to_string(Family family);
Family family_from_string(const std::string& name);

struct Range {
  double lo;
  double hi;
};

struct HazeParams {
  Range transmission{0.4, 0.8};
  Range airlight{0.7, 1.0};
};

struct RainParams {
  Range streaks{20, 60};
  Range angle_deg{60, 80};
  Range length_px{6, 14};
  Range intensity{0.2, 0.5};
};

struct SnowParams {
  Range flakes{30, 80};
  Range radius_px{1, 3};
  Range intensity{0.4, 0.8};
};

struct DegradationSpec {
  Family family = Family::Haze;
  std::uint64_t seed = 0;
  HazeParams haze{};
  RainParams rain{};
  SnowParams snow{};
};

/// Clean image 3×size×size in [0,1]: 2–4 blended linear colour gradients
/// with 1–3 solid rectangles or discs on top. Pure function of the inputs.
Tensor generate_clean(std::uint64_t seed, std::uint64_t index, std::size_t size);

/// I = J·t + A·(1 − t) with scalar t and A.
Tensor apply_haze(const Tensor& clean, double transmission, double airlight);

/// Degradation before clamping; rain and snow add a non-negative mask.
Tensor degrade_unclamped(const Tensor& clean, const DegradationSpec& spec, std::uint64_t index);
/// Degradation clamped to [0, 1].
Tensor degrade(const Tensor& clean, const DegradationSpec& spec, std::uint64_t index);

struct SamplePair {
  Tensor clean;     // 3×H×W
  Tensor degraded;  // 3×H×W
  Family family;
  std::uint64_t index;
};

SamplePair make_sample(const DegradationSpec& spec, std::uint64_t index, std::size_t size);

/// Stacks 3×H×W samples into an N×3×H×W batch.
Tensor stack_images(const std::vector<Tensor>& images);
/// Extracts sample `n` of a batch as 1×C×H×W.
Tensor batch_item(const Tensor& batch, std::size_t n);

struct SeparationReport {
  std::size_t samples_per_family = 0;
  // mean signature per family, Haze/Rain/Snow order
  std::vector<TaskVector> family_means;
  // s_sum between the two halves of each family
  std::vector<double> within_family;
  // s_sum for (Haze,Rain), (Haze,Snow), (Rain,Snow), first halves
  std::vector<double> between_family;
};

/// Mean signatures of encoder features per family and their pairwise
/// combined similarities, measured in the space induced by registering the
/// first-half means. Requires at least 32 samples per family.
SeparationReport family_statistics_separation(std::size_t samples_per_family, std::uint64_t seed,
                                              std::size_t size, const MiniBackbone& encoder,
                                              SignatureNormalization mode);

/// Binary PPM (P6, maxval 255); values quantized as floor(v·255 + 0.5).
void write_ppm(const std::filesystem::path& path, const Tensor& image);

}  // namespace delnet
