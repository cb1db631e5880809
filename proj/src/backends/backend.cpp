#include "promptsens/backends/backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "promptsens/datasets/dataset.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

void CompletionRequest::validate() const {
  if (prompt.empty()) throw InvalidArgument("completion request: empty prompt");
  if (max_new_tokens < 1) throw InvalidArgument("completion request: max_new_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw InvalidArgument("completion request: temperature must be >= 0");
}

void GradientMap::validate() const {
  if (tokens.size() != grads.size()) {
    throw InvalidArgument("gradient map: " + std::to_string(tokens.size()) + " tokens but " +
                          std::to_string(grads.size()) + " gradient vectors");
  }
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const GradientToken& t = tokens[i];
    if (t.end < t.start) throw InvalidArgument("gradient map: token " + std::to_string(i) + " has end < start");
    if (t.start < prev_end) throw InvalidArgument("gradient map: token " + std::to_string(i) + " overlaps its predecessor");
    prev_end = t.end;
    if (grads[i].size() != grads.front().size()) throw InvalidArgument("gradient map: ragged gradient vectors");
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw InvalidArgument("gradient map: non-finite gradient at token " + std::to_string(i));
    }
  }
}

void GradientMap::validate_against(const std::string& prompt) const {
  validate();
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const GradientToken& t = tokens[i];
    if (t.start != cursor) {
      throw InvalidArgument("gradient map: offsets leave a gap or overlap at char " + std::to_string(cursor));
    }
    if (t.end > prompt.size() || prompt.compare(t.start, t.end - t.start, t.text) != 0) {
      throw InvalidArgument("gradient map: token " + std::to_string(i) + " text does not match the prompt");
    }
    cursor = t.end;
  }
  if (cursor != prompt.size()) throw InvalidArgument("gradient map: offsets do not cover the whole prompt");
}

GradientMap Backend::gradients(const std::string&, const std::string&) const {
  throw GradientUnsupported("backend '" + id() + "' does not expose input gradients");
}

std::string Backend::infill(const std::string& text, WordRange mask) const {
  const auto words = words_of(text);
  if (mask.begin >= mask.end || mask.end > words.size()) {
    throw InvalidArgument("infill: mask range outside the text");
  }
  std::string masked, original;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i == mask.begin) masked += (masked.empty() ? "" : " ") + std::string("___");
    if (i >= mask.begin && i < mask.end) {
      original += (original.empty() ? "" : " ") + words[i];
      continue;
    }
    masked += (masked.empty() ? "" : " ") + words[i];
  }
  CompletionRequest req;
  req.prompt = "Fill in the blank.\nTEXT: " + masked + "\nBLANK:";
  req.max_new_tokens = static_cast<int>(mask.end - mask.begin) + 1;
  constexpr int kAttempts = 4;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    req.temperature = attempt == 0 ? 0.0 : 1.0;
    req.seed = static_cast<std::uint64_t>(attempt);
    const auto got = words_of(complete(req).text);
    std::string joined;
    for (const auto& w : got) joined += (joined.empty() ? "" : " ") + w;
    if (!joined.empty() && joined != original) return joined;
  }
  throw BackendError("infill: no differing replacement after 4 attempts");
}

CompletionResult complete_with_retry(const Backend& backend, const CompletionRequest& request,
                                     const RetryPolicy& policy) {
  auto delay = policy.backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      return backend.complete(request);
    } catch (const TransportError&) {
      if (attempt >= policy.retries) throw;
    }
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * policy.factor));
  }
}

double log_sum_exp(const std::vector<double>& values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

std::vector<double> candidate_probabilities(const std::map<std::string, double>& logprobs,
                                            const std::vector<std::string>& candidates) {
  std::vector<double> lp;
  lp.reserve(candidates.size());
  for (const std::string& c : candidates) {
    auto it = logprobs.find(c);
    if (it == logprobs.end()) throw ScoringUnsupported("no log-probability for candidate '" + c + "'");
    lp.push_back(it->second);
  }
  const double norm = log_sum_exp(lp);
  if (!std::isfinite(norm)) throw ScoringUnsupported("candidate log-probabilities are all -inf");
  std::vector<double> out;
  out.reserve(lp.size());
  for (double v : lp) out.push_back(std::exp(v - norm));
  return out;
}

}  // namespace promptsens
