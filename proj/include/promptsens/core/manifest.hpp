#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace promptsens {

enum class SubsetStrategy { span, scatter };

struct DecodingStrategy {
  std::string name = "greedy";  // greedy | top_k | sad
  double temperature = 0.8;
  int k = 40;
  double alpha = 0.5;

  bool requires_sensitivity() const { return name == "sad"; }
};

struct PerturbationConfig {
  int k = 2;
  SubsetStrategy strategy = SubsetStrategy::span;
  std::string target_field;  // empty: format default
};

/// Everything needed to reproduce one experiment. Serialized as a single
/// JSON document; unknown keys are rejected.
struct RunManifest {
  std::filesystem::path dataset;
  std::string dataset_format = "generic";
  std::string template_id = "base_b";
  std::filesystem::path template_file;
  std::filesystem::path exemplars;
  int exemplar_count = 4;
  std::string instruction;
  std::string backend = "mock";
  nlohmann::json backend_config = nlohmann::json::object();
  DecodingStrategy strategy;
  int n_variants = 5;
  std::vector<std::uint64_t> seeds{2266};
  std::filesystem::path out_dir = "out";
  PerturbationConfig perturbation;
  std::vector<double> alpha_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> candidates;
  std::filesystem::path gradients;
  std::optional<int> max_new_tokens;
  int parallel = 8;
  int failure_tolerance = 0;
  int retries = 3;
  int backoff_ms = 200;

  void validate() const;
};

RunManifest manifest_from_json(const nlohmann::json& doc);
nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& path);

std::string to_string(SubsetStrategy strategy);
SubsetStrategy subset_strategy_from_string(const std::string& name);

}  // namespace promptsens
