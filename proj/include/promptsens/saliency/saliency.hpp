#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "promptsens/backends/backend.hpp"
#include "promptsens/prompts/prompts.hpp"
#include "promptsens/sensitivity/sensitivity.hpp"

namespace promptsens {

// S(x_i) = sum_d |g_i[d]|. Throws InvalidArgument on non-finite entries.
std::vector<double> saliency_scores(const GradientMap& gmap);

struct TokenSaliency {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  SegmentTag tag = SegmentTag::prompt;
  // Exemplar and zero-width tokens are tagged prompt but left out of every
  // statistic.
  bool excluded = false;
  double score = 0.0;
};

struct SegmentedSaliency {
  std::string instance_id;
  std::vector<TokenSaliency> tokens;
  std::map<SegmentTag, double> means;  // over non-excluded tokens
};

/// Tags each token with the segment it overlaps most (the exemplar region
/// counts as a segment placed before all others; exact ties go to the earlier
/// segment). Scores are left at zero. Throws InvalidArgument when a token's
/// text does not match the prompt at its offsets or the tokens leave part of
/// the test instance uncovered.
SegmentedSaliency assign_segments(const GradientMap& gmap, const RenderedPrompt& rendered,
                                  std::string instance_id = {});

// Rescales scores so the non-excluded tokens sum to 1000 (no-op when they
// sum to 0).
void normalize_permille(SegmentedSaliency& seg);

// Mean score over the non-excluded tokens of `tag`; throws EstimationError
// when there are none.
double mean_segment_saliency(const SegmentedSaliency& seg, SegmentTag tag);

// Fills `means` for every tag present.
void compute_means(SegmentedSaliency& seg);

// assign_segments + saliency_scores + normalize_permille + compute_means.
SegmentedSaliency segmented_saliency(const GradientMap& gmap, const RenderedPrompt& rendered,
                                     std::string instance_id);

// Report precision: two decimals, half away from zero.
double round2(double value);
std::string format2(double value);

/// Per-segment means averaged over instances, held at report precision so
/// delta and ratio are exact functions of the stored means.
struct SegmentStats {
  std::size_t instances = 0;
  std::map<SegmentTag, double> means;
  double delta = 0.0;            // prompt - input
  std::optional<double> ratio;   // input / prompt, percent; empty when prompt is 0
  std::optional<double> sensitivity;
};

SegmentStats stats_from_means(double input_mean, double prompt_mean);

// Averages per-instance means per segment. When `sensitivities` is non-empty
// every record id must appear there (EstimationError otherwise) and the
// mean s over the joined records is attached.
SegmentStats segment_stats(const std::vector<SegmentedSaliency>& records,
                           const std::vector<SensitivityRecord>& sensitivities);

struct TargetStats {
  double input = 0.0;
  double target = 0.0;
  std::optional<double> ratio;  // input / target, percent; empty when target is 0
};

TargetStats target_stats_from_means(double input_mean, double target_mean);
// Over records rendered with an embedded answer sentence; throws
// EstimationError when no record has target tokens.
TargetStats target_token_stats(const std::vector<SegmentedSaliency>& records);

std::string segmented_saliency_to_json(const SegmentedSaliency& seg);

struct StatsRow {
  std::string dataset;
  std::string template_id;
  SegmentStats stats;
  std::optional<TargetStats> target;
};

// dataset,template,n,input,prompt,knowledge,option,target,delta,ratio,target_ratio,sensitivity
std::string segment_stats_csv(const std::vector<StatsRow>& rows);

}  // namespace promptsens
