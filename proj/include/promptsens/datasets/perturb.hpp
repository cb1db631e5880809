#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "promptsens/core/manifest.hpp"
#include "promptsens/core/rng.hpp"
#include "promptsens/core/types.hpp"

namespace promptsens {

/// Word-level replacement source harvested from a corpus, sampled by
/// frequency.
class ReplacementVocabulary {
 public:
  ReplacementVocabulary() = default;
  explicit ReplacementVocabulary(std::map<std::string, std::uint64_t> counts);

  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }
  std::size_t distinct() const noexcept { return tokens_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  bool empty() const noexcept { return tokens_.empty(); }

  const std::string& draw(Rng& rng) const;

  // A token different from `original`: up to 16 frequency-weighted resamples,
  // then a uniform pick over the other distinct entries. Throws
  // PerturbationError when `original` is the only entry.
  const std::string& draw_different(const std::string& original, Rng& rng) const;

 private:
  std::map<std::string, std::uint64_t> counts_;
  std::vector<std::string> tokens_;
  std::vector<double> weights_;
  std::uint64_t total_ = 0;
};

ReplacementVocabulary build_replacement_vocab(const std::vector<Instance>& instances,
                                              const std::string& field);

struct PerturbationSet {
  Instance original;
  std::vector<Instance> variants;
  std::vector<std::vector<std::size_t>> subsets;  // sorted word indices
  std::string target_field;

  std::size_t size() const noexcept { return variants.size(); }
  friend bool operator==(const PerturbationSet&, const PerturbationSet&) = default;
};

// Optional LM-backed replacement for a single word position; returning an
// empty string or the original word falls back to the vocabulary.
using WordInfiller = std::function<std::string(const std::string& field_text, std::size_t word_index)>;

PerturbationSet synthesize_perturbations(const Instance& instance, const ReplacementVocabulary& vocab,
                                         int n, int k, SubsetStrategy strategy, Rng& rng,
                                         const std::string& target_field,
                                         const WordInfiller& infiller = {});

// Seed used for one instance: independent of processing order.
std::uint64_t instance_seed(std::uint64_t run_seed, const std::string& instance_id);

struct VariantAudit {
  std::string variant_id;
  std::size_t subset_size = 0;
  std::size_t changed = 0;
  double changed_fraction = 0.0;
  bool noisy = false;
  std::string violation;  // empty when the variant satisfies the set invariants
};

struct PerturbationReport {
  std::vector<VariantAudit> variants;
  std::size_t noisy = 0;
  std::size_t violations = 0;
};

/// Mechanical audit: per variant the subset size and changed fraction; a noise
/// flag when more than half of the words changed, the field became empty, or
/// nothing changed at all.
PerturbationReport validate_perturbation_set(const PerturbationSet& set);

}  // namespace promptsens
