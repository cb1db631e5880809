#include "promptsens/decoding/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "promptsens/error.hpp"

namespace promptsens {

void CandidateScores::validate() const {
  if (candidates.empty()) throw InvalidArgument("candidate scores: empty candidate set");
  if (probs.size() != candidates.size() || raw_logprobs.size() != candidates.size()) {
    throw InvalidArgument("candidate scores: size mismatch");
  }
  if (std::set<std::string>(candidates.begin(), candidates.end()).size() != candidates.size()) {
    throw InvalidArgument("candidate scores: duplicate candidates");
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(std::abs(total - 1.0) <= 1e-9)) throw InvalidArgument("candidate scores: probabilities do not sum to 1");
}

CandidateScores make_candidate_scores(const std::vector<std::string>& candidates,
                                      const std::map<std::string, double>& logprobs) {
  CandidateScores s;
  s.candidates = candidates;
  s.probs = candidate_probabilities(logprobs, candidates);
  for (const std::string& c : candidates) s.raw_logprobs.push_back(logprobs.at(c));
  s.validate();
  return s;
}

std::size_t greedy_index(const CandidateScores& scores) {
  if (scores.candidates.empty()) throw InvalidArgument("greedy: empty candidate set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.probs.size(); ++i) {
    if (scores.probs[i] > scores.probs[best]) best = i;
  }
  return best;
}

CanonicalLabel greedy_select(const CandidateScores& scores) {
  return CanonicalLabel(scores.candidates[greedy_index(scores)]);
}

std::size_t top_k_index(const CandidateScores& scores, int k, double temperature, Rng& rng) {
  if (scores.candidates.empty()) throw InvalidArgument("top-k: empty candidate set");
  if (k < 1) throw InvalidArgument("top-k: k must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidArgument("top-k: temperature must be > 0");
  std::vector<std::size_t> order(scores.probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.probs[a] > scores.probs[b]; });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
  if (order.size() == 1) return order.front();

  std::vector<double> logits;
  for (std::size_t i : order) logits.push_back(std::log(scores.probs[i]) / temperature);
  const double lse = log_sum_exp(logits);
  std::vector<double> weights;
  for (double l : logits) weights.push_back(std::exp(l - lse));
  return order[rng.weighted(weights)];
}

CanonicalLabel top_k_sample(const CandidateScores& scores, int k, double temperature, Rng& rng) {
  return CanonicalLabel(scores.candidates[top_k_index(scores, k, temperature, rng)]);
}

std::size_t sensitivity_aware_index(const CandidateScores& scores, const CandidateDispersion& dispersion,
                                    double alpha) {
  if (scores.candidates.empty()) throw InvalidArgument("sensitivity-aware decoding: empty candidate set");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("sensitivity-aware decoding: alpha must lie in [0,1]");
  if (dispersion.candidates != scores.candidates || dispersion.normalized.size() != scores.candidates.size()) {
    throw InvalidArgument("sensitivity-aware decoding: dispersion does not match the candidate set");
  }
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.probs.size(); ++i) {
    const double v = alpha * scores.probs[i] - (1.0 - alpha) * dispersion.normalized[i];
    if (v > best_score) {
      best_score = v;
      best = i;
    }
  }
  return best;
}

CanonicalLabel sensitivity_aware_select(const CandidateScores& scores, const CandidateDispersion& dispersion,
                                        double alpha) {
  return CanonicalLabel(scores.candidates[sensitivity_aware_index(scores, dispersion, alpha)]);
}

SweepResult alpha_sweep(const std::vector<SweepInstance>& instances, const std::vector<double>& grid) {
  if (instances.empty()) throw InvalidArgument("alpha sweep: no instances");
  if (grid.empty()) throw InvalidArgument("alpha sweep: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] <= 1.0)) throw InvalidArgument("alpha sweep: grid values must lie in (0,1]");
    if (i && !(grid[i] > grid[i - 1])) throw InvalidArgument("alpha sweep: grid must increase strictly");
  }
  const double n = static_cast<double>(instances.size());
  SweepResult r;
  r.grid = grid;
  std::size_t greedy_hits = 0;
  for (const SweepInstance& inst : instances) greedy_hits += greedy_select(inst.scores) == inst.gold;
  r.greedy_accuracy = static_cast<double>(greedy_hits) / n;
  for (double alpha : grid) {
    std::size_t hits = 0;
    for (const SweepInstance& inst : instances) {
      hits += sensitivity_aware_select(inst.scores, inst.dispersion, alpha) == inst.gold;
    }
    r.accuracy.push_back(static_cast<double>(hits) / n);
  }
  const auto best = std::max_element(r.accuracy.begin(), r.accuracy.end());
  r.best_accuracy = *best;
  r.best_alpha = grid[static_cast<std::size_t>(best - r.accuracy.begin())];
  return r;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::string out = "alpha,accuracy\n";
  char buf[64];
  for (std::size_t i = 0; i < result.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.2f,%.6f\n", result.grid[i], result.accuracy[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "greedy,%.6f\n", result.greedy_accuracy);
  out += buf;
  return out;
}

}  // namespace promptsens
