#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "promptsens/core/manifest.hpp"

namespace promptsens {

struct CommandOutcome {
  int exit_code = 0;
  std::string summary;
  std::vector<std::filesystem::path> artifacts;
};

// Command-line values that replace manifest fields.
struct ManifestOverrides {
  std::optional<std::string> backend;
  std::optional<std::string> template_id;
  std::optional<std::vector<double>> alpha_grid;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> parallel;
};

// Applies the overrides and re-validates.
void apply_overrides(RunManifest& manifest, const ManifestOverrides& overrides);

// Writes the perturbation cache for every seed and audits it.
CommandOutcome cmd_synth(const RunManifest& manifest);

// Sensitivity records for every seed plus a report over them. Completed
// instances are checkpointed and skipped on rerun.
CommandOutcome cmd_run(const RunManifest& manifest);

// Sensitivity-aware decoding swept over the manifest's alpha grid, paired
// with the greedy baseline.
CommandOutcome cmd_decode(const RunManifest& manifest);

// Per-token saliency and per-segment statistics for the original instances.
CommandOutcome cmd_saliency(const RunManifest& manifest);

// Aggregates every record set under the output directory.
CommandOutcome cmd_report(const RunManifest& manifest);

// Directory component derived from an arbitrary id.
std::string path_safe(const std::string& id);

}  // namespace promptsens
