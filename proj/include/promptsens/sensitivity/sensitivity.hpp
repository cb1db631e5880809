#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptsens/backends/backend.hpp"
#include "promptsens/core/manifest.hpp"
#include "promptsens/core/types.hpp"
#include "promptsens/datasets/perturb.hpp"
#include "promptsens/prompts/prompts.hpp"

namespace promptsens {

// Most frequent label and its multiplicity. Ties go to the label that occurs
// first. Throws EstimationError on an empty list.
std::pair<CanonicalLabel, std::size_t> mode_frequency(std::span<const CanonicalLabel> labels);

// 1 - f_m / |labels|.
double variation_ratio(std::span<const CanonicalLabel> labels);

struct SensitivityRecord {
  std::string id;
  double s = 0.0;
  CanonicalLabel mode;
  std::size_t f_m = 0;
  std::size_t n = 0;  // synthetic variants; labels has n + 1 entries
  bool correct = false;
  std::vector<CanonicalLabel> labels;  // original first

  const CanonicalLabel& original() const { return labels.front(); }
  friend bool operator==(const SensitivityRecord&, const SensitivityRecord&) = default;
};

// Builds the record from the prediction multiset (original first).
SensitivityRecord make_sensitivity_record(std::string id, std::vector<CanonicalLabel> labels,
                                          const CanonicalLabel& gold);

struct CandidateDispersion {
  std::vector<std::string> candidates;
  std::vector<double> variance;    // population variance per candidate
  std::vector<double> normalized;  // min-max over candidates; all 0 when equal
  double min = 0.0;
  double max = 0.0;
};

// `scores` is n x |candidates| (one row per synthetic input). Throws
// EstimationError for n < 2, ragged rows or non-finite scores.
CandidateDispersion candidate_dispersion(const std::vector<std::string>& candidates,
                                         const std::vector<std::vector<double>>& scores);

/// One inference: what the backend returned and the label derived from it.
struct PredictionRecord {
  std::string prompt_id;  // instance id, or variant id
  CanonicalLabel label;
  std::string raw;
  std::optional<std::map<std::string, double>> candidate_logprobs;
};

struct InferenceOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  // Scoring candidates; empty means the option indices "0".."m-1".
  std::vector<std::string> candidates;
  std::optional<int> max_new_tokens;
};

struct SensitivityEstimate {
  SensitivityRecord record;
  std::vector<PredictionRecord> predictions;  // original first
};

// Candidate strings used for scoring `instance`.
std::vector<std::string> scoring_candidates(const Instance& instance, const std::vector<std::string>& configured);

/// Renders the original and every variant, announces them to the backend,
/// runs one inference per prompt and applies the variation ratio.
///
/// greedy decodes at temperature 0 and extracts the answer from the text.
/// top_k scores the candidate set and samples from the top k (open numeric
/// tasks sample the generation instead). sad labels each prompt by its best
/// candidate and picks the original's label with the sensitivity-aware rule.
/// Any backend error aborts the whole instance.
SensitivityEstimate estimate_sensitivity(const Instance& instance, const PerturbationSet& pset,
                                         const PromptTemplate& tmpl, const std::vector<Instance>& exemplars,
                                         Backend& backend, const DecodingStrategy& strategy,
                                         const InferenceOptions& options);

struct RecordMeta {
  std::string dataset;
  std::string template_id;
  std::string strategy;
  std::string backend;
  std::uint64_t seed = 0;

  friend bool operator==(const RecordMeta&, const RecordMeta&) = default;
};

std::string sensitivity_record_to_json(const SensitivityRecord& record);
SensitivityRecord sensitivity_record_from_json(const std::string& line);

// `<path>` holds one record per line; `<path>.meta.json` holds the meta.
void write_sensitivity_records(const std::filesystem::path& path, const std::vector<SensitivityRecord>& records,
                               const RecordMeta& meta);
std::pair<std::vector<SensitivityRecord>, RecordMeta> read_sensitivity_records(const std::filesystem::path& path);

}  // namespace promptsens
