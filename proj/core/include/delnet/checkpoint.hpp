#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "delnet/harness.hpp"

namespace delnet {

inline constexpr int kCheckpointVersion = 1;

// A checkpoint is a directory holding manifest.json plus one .dlt blob per
// tensor. Writing the same state twice yields identical bytes.
void save_checkpoint(const ContinualState& state, const std::filesystem::path& dir);

/// Builds a fresh state from disk. Throws FormatError on missing or
/// truncated files and on an unsupported format version; nothing is
/// returned in that case.
ContinualState load_checkpoint(const std::filesystem::path& dir);

/// Deterministic probe batch: the first batch_size validation images of the
/// latest task's family, run through that task's routing.
Tensor checkpoint_probe(const ContinualState& state);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Loads the checkpoint, re-runs the probe and compares it bit for bit with
/// the stored output; also re-checks every frozen-expert digest.
VerifyReport checkpoint_roundtrip(const std::filesystem::path& dir);

}  // namespace delnet
