#include "promptsens/datasets/perturb.hpp"

#include <algorithm>
#include <numeric>

#include "promptsens/core/hash.hpp"
#include "promptsens/datasets/dataset.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

namespace {
constexpr int kMaxResamples = 16;
}

ReplacementVocabulary::ReplacementVocabulary(std::map<std::string, std::uint64_t> counts)
    : counts_(std::move(counts)) {
  for (const auto& [token, count] : counts_) {
    if (token.empty()) throw PerturbationError("replacement vocabulary contains an empty token");
    if (count == 0) continue;
    tokens_.push_back(token);
    weights_.push_back(static_cast<double>(count));
    total_ += count;
  }
}

const std::string& ReplacementVocabulary::draw(Rng& rng) const {
  if (tokens_.empty()) throw PerturbationError("replacement vocabulary is empty");
  return tokens_[rng.weighted(weights_)];
}

const std::string& ReplacementVocabulary::draw_different(const std::string& original, Rng& rng) const {
  const std::string* pick = &draw(rng);
  for (int attempt = 0; attempt < kMaxResamples && *pick == original; ++attempt) pick = &draw(rng);
  if (*pick != original) return *pick;

  const bool has_original = counts_.count(original) && counts_.at(original) > 0;
  const std::size_t others = tokens_.size() - (has_original ? 1 : 0);
  if (others == 0) {
    throw PerturbationError("vocabulary cannot supply a token different from '" + original + "'");
  }
  std::size_t r = rng.below(others);
  for (const std::string& t : tokens_) {
    if (t == original) continue;
    if (r == 0) return t;
    --r;
  }
  throw PerturbationError("unreachable: vocabulary scan");
}

ReplacementVocabulary build_replacement_vocab(const std::vector<Instance>& instances,
                                              const std::string& field) {
  if (instances.empty()) throw PerturbationError("build_replacement_vocab: no instances");
  std::map<std::string, std::uint64_t> counts;
  for (const Instance& inst : instances) {
    auto it = inst.fields.find(field);
    if (it == inst.fields.end()) continue;
    for (std::string& w : words_of(it->second)) ++counts[std::move(w)];
  }
  if (counts.empty()) {
    throw PerturbationError("replacement vocabulary for field '" + field + "' is empty");
  }
  return ReplacementVocabulary(std::move(counts));
}

std::uint64_t instance_seed(std::uint64_t run_seed, const std::string& instance_id) {
  return mix_seed(run_seed, fnv1a64(instance_id));
}

PerturbationSet synthesize_perturbations(const Instance& instance, const ReplacementVocabulary& vocab,
                                         int n, int k, SubsetStrategy strategy, Rng& rng,
                                         const std::string& target_field, const WordInfiller& infiller) {
  if (n < 0) throw InvalidArgument("synthesize_perturbations: n must be >= 0");
  if (vocab.empty()) throw PerturbationError("replacement vocabulary is empty");
  const std::string& text = instance.field(target_field);
  const std::vector<WordSpan> words = split_words(text);
  const std::size_t len = words.size();
  if (k < 1 || static_cast<std::size_t>(k) > len) {
    throw PerturbationError("instance '" + instance.id + "': subset size " + std::to_string(k) +
                           " exceeds field '" + target_field + "' length " + std::to_string(len));
  }
  const std::size_t kk = static_cast<std::size_t>(k);

  PerturbationSet out;
  out.original = instance;
  out.target_field = target_field;
  out.variants.reserve(static_cast<std::size_t>(n));
  out.subsets.reserve(static_cast<std::size_t>(n));

  std::vector<std::size_t> pool(len);
  for (int j = 0; j < n; ++j) {
    std::vector<std::size_t> subset;
    if (strategy == SubsetStrategy::span) {
      const std::size_t start = rng.below(len - kk + 1);
      for (std::size_t i = 0; i < kk; ++i) subset.push_back(start + i);
    } else {
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t i = 0; i < kk; ++i) {
        const std::size_t pick = i + rng.below(len - i);
        std::swap(pool[i], pool[pick]);
      }
      subset.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(kk));
      std::sort(subset.begin(), subset.end());
    }

    // Rebuild the field in place so whitespace outside the subset is kept.
    std::string variant_text;
    std::size_t cursor = 0;
    for (std::size_t idx : subset) {
      const WordSpan& w = words[idx];
      const std::string original_word = text.substr(w.begin, w.end - w.begin);
      std::string replacement;
      if (infiller) {
        const auto infilled = words_of(infiller(text, idx));
        if (!infilled.empty() && infilled.front() != original_word) replacement = infilled.front();
      }
      if (replacement.empty()) replacement = vocab.draw_different(original_word, rng);
      variant_text.append(text, cursor, w.begin - cursor);
      variant_text += replacement;
      cursor = w.end;
    }
    variant_text.append(text, cursor, std::string::npos);

    Instance variant = instance;
    variant.id = instance.id + "#" + std::to_string(j);
    variant.fields[target_field] = std::move(variant_text);
    out.variants.push_back(std::move(variant));
    out.subsets.push_back(std::move(subset));
  }
  return out;
}

PerturbationReport validate_perturbation_set(const PerturbationSet& set) {
  PerturbationReport report;
  const auto original_words = words_of(set.original.field(set.target_field));
  if (set.variants.size() != set.subsets.size()) {
    VariantAudit audit;
    audit.violation = "variant/subset count mismatch";
    report.variants.push_back(audit);
    report.violations = 1;
    return report;
  }
  for (std::size_t j = 0; j < set.variants.size(); ++j) {
    const Instance& v = set.variants[j];
    auto subset = set.subsets[j];
    std::sort(subset.begin(), subset.end());
    VariantAudit audit;
    audit.variant_id = v.id;
    audit.subset_size = subset.size();

    const auto words = words_of(v.field(set.target_field));
    const std::size_t span = std::max(words.size(), original_words.size());
    std::vector<std::size_t> changed;
    for (std::size_t i = 0; i < span; ++i) {
      const bool same = i < words.size() && i < original_words.size() && words[i] == original_words[i];
      if (!same) changed.push_back(i);
    }
    audit.changed = changed.size();
    audit.changed_fraction =
        original_words.empty() ? 1.0 : static_cast<double>(changed.size()) / static_cast<double>(original_words.size());
    audit.noisy = audit.changed_fraction > 0.5 || words.empty() || changed.empty();

    if (v.id != set.original.id + "#" + std::to_string(j)) {
      audit.violation = "unexpected variant id";
    } else if (words.size() != original_words.size()) {
      audit.violation = "word count changed";
    } else if (changed.empty()) {
      audit.violation = "variant identical to original";
    } else {
      for (std::size_t idx : subset) {
        if (idx >= original_words.size()) audit.violation = "subset index out of range";
      }
      for (std::size_t idx : changed) {
        if (!std::binary_search(subset.begin(), subset.end(), idx)) {
          audit.violation = "word " + std::to_string(idx) + " changed outside the subset";
        }
      }
    }
    if (audit.noisy) ++report.noisy;
    if (!audit.violation.empty()) ++report.violations;
    report.variants.push_back(std::move(audit));
  }
  return report;
}

}  // namespace promptsens
