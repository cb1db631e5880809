#pragma once

#include <map>
#include <string>
#include <vector>

#include "promptsens/core/rng.hpp"
#include "promptsens/core/types.hpp"
#include "promptsens/sensitivity/sensitivity.hpp"

namespace promptsens {

struct CandidateScores {
  std::vector<std::string> candidates;
  std::vector<double> probs;         // renormalized over the candidate set
  std::vector<double> raw_logprobs;  // as returned by the backend

  // Throws InvalidArgument: empty, size mismatch, duplicates, probabilities
  // not summing to 1 within 1e-9.
  void validate() const;
};

// Renormalizes backend log-probabilities over `candidates` (in that order).
CandidateScores make_candidate_scores(const std::vector<std::string>& candidates,
                                      const std::map<std::string, double>& logprobs);

// Argmax probability; ties go to the lowest index.
std::size_t greedy_index(const CandidateScores& scores);
CanonicalLabel greedy_select(const CandidateScores& scores);

// Keeps the k most probable candidates (ties by index), scales their
// log-probabilities by 1/temperature, renormalizes and samples.
std::size_t top_k_index(const CandidateScores& scores, int k, double temperature, Rng& rng);
CanonicalLabel top_k_sample(const CandidateScores& scores, int k, double temperature, Rng& rng);

// argmax_y alpha * P(y|x) - (1 - alpha) * s_y with s the normalized
// dispersion; ties go to the lowest index.
std::size_t sensitivity_aware_index(const CandidateScores& scores, const CandidateDispersion& dispersion,
                                    double alpha);
CanonicalLabel sensitivity_aware_select(const CandidateScores& scores, const CandidateDispersion& dispersion,
                                        double alpha);

// Everything the sweep needs for one instance, computed once and reused for
// every alpha.
struct SweepInstance {
  std::string id;
  CandidateScores scores;
  CandidateDispersion dispersion;
  CanonicalLabel gold;
};

struct SweepResult {
  std::vector<double> grid;
  std::vector<double> accuracy;  // per grid value
  double greedy_accuracy = 0.0;
  double best_alpha = 0.0;       // smallest alpha reaching the best accuracy
  double best_accuracy = 0.0;
};

// Grid values must lie in (0, 1] and increase strictly.
SweepResult alpha_sweep(const std::vector<SweepInstance>& instances, const std::vector<double>& grid);

// "alpha,accuracy" rows followed by a "greedy,<accuracy>" row.
std::string sweep_to_csv(const SweepResult& result);

}  // namespace promptsens
