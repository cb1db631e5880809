#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptsens/core/types.hpp"

namespace promptsens {

struct CompletionRequest {
  std::string prompt;
  int max_new_tokens = 2;
  double temperature = 0.0;
  std::optional<std::vector<std::string>> candidate_set;
  bool want_logprobs = false;
  // Sampling seed for temperature > 0; ignored by greedy decoding.
  std::uint64_t seed = 0;

  void validate() const;
};

struct TokenLogprobs {
  std::string token;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> top;
};

struct CompletionResult {
  std::string text;
  std::optional<std::map<std::string, double>> candidate_logprobs;
  std::optional<std::vector<TokenLogprobs>> token_logprobs;
};

struct GradientToken {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const GradientToken&, const GradientToken&) = default;
};

/// Per-token gradients of one target logit with respect to the input
/// embeddings, with each token's character range in the prompt.
struct GradientMap {
  std::vector<GradientToken> tokens;
  std::vector<std::vector<double>> grads;

  // Throws InvalidArgument on |tokens| != |grads|, overlapping or descending
  // offsets, ragged or non-finite vectors.
  void validate() const;
  // validate() plus: token texts match `prompt` at their offsets and the
  // offsets tile the whole prompt.
  void validate_against(const std::string& prompt) const;
};

// Word index range [begin, end) used to mask text for infilling.
struct WordRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Uniform model-access layer. Implementations must be safe to call from
/// several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string id() const = 0;
  virtual CompletionResult complete(const CompletionRequest& request) const = 0;

  virtual bool supports_gradients() const { return false; }
  // Throws GradientUnsupported unless overridden.
  virtual GradientMap gradients(const std::string& prompt, const std::string& target) const;

  // Replacement text for the masked words, never equal to them. The default
  // asks complete() with a fill-in-the-blank prompt, up to 4 attempts.
  virtual std::string infill(const std::string& text, WordRange mask) const;

  // Oracle backends used for calibration receive each instance's rendered
  // prompts and gold label before inference. Real backends ignore this.
  virtual void observe_instance(const std::string& original_prompt,
                                const std::vector<std::string>& variant_prompts,
                                const CanonicalLabel& gold, std::size_t option_count) {
    (void)original_prompt;
    (void)variant_prompts;
    (void)gold;
    (void)option_count;
  }
};

struct RetryPolicy {
  int retries = 3;
  std::chrono::milliseconds backoff{200};
  double factor = 2.0;
};

// Retries TransportError with exponential backoff; other errors propagate.
CompletionResult complete_with_retry(const Backend& backend, const CompletionRequest& request,
                                     const RetryPolicy& policy);

// Renormalizes candidate log-probabilities to a distribution over the
// candidate set, in `candidates` order.
std::vector<double> candidate_probabilities(const std::map<std::string, double>& logprobs,
                                            const std::vector<std::string>& candidates);

double log_sum_exp(const std::vector<double>& values);

}  // namespace promptsens
