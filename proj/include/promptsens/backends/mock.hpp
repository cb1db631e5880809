#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "promptsens/backends/backend.hpp"

namespace promptsens {

/// Scripted backend for tests and dry runs.
class MockBackend : public Backend {
 public:
  using Responder = std::function<CompletionResult(const CompletionRequest&)>;

  explicit MockBackend(Responder responder, std::string id = "mock");

  // Always answers `text`; candidate scoring puts 0.9 on the matching
  // candidate and spreads the rest evenly.
  static MockBackend constant(std::string text);
  // Exact prompt lookup; unknown prompts get `fallback` or BackendRefused.
  static MockBackend table(std::map<std::string, std::string> answers,
                           std::optional<std::string> fallback = std::nullopt);
  // Answers `flipped` when the prompt contains `marker`, `base` otherwise.
  static MockBackend marker_flip(std::string marker, std::string base, std::string flipped);

  void set_infill_table(std::map<std::string, std::string> table) { infill_table_ = std::move(table); }

  std::string id() const override { return id_; }
  CompletionResult complete(const CompletionRequest& request) const override;
  std::string infill(const std::string& text, WordRange mask) const override;

 private:
  Responder responder_;
  std::string id_;
  std::map<std::string, std::string> infill_table_;
};

// Candidate log-probabilities with `p_chosen` on `chosen` (when it is a
// candidate) and the remainder split evenly.
std::map<std::string, double> peaked_logprobs(const std::vector<std::string>& candidates,
                                              const std::string& chosen, double p_chosen = 0.9);

/// Calibration oracle with a known instability q.
///
/// On an original prompt it answers the gold label with probability 1 - q;
/// on a perturbed prompt it flips away from its own answer on the original
/// with probability q. Draws are hashed from (seed, prompt), so the mock is
/// deterministic and order-independent. Prompts must be announced through
/// observe_instance() first.
class InstabilityMock : public Backend {
 public:
  InstabilityMock(double q, std::uint64_t seed);

  std::string id() const override;
  CompletionResult complete(const CompletionRequest& request) const override;
  void observe_instance(const std::string& original_prompt, const std::vector<std::string>& variant_prompts,
                        const CanonicalLabel& gold, std::size_t option_count) override;

  double instability() const noexcept { return q_; }

 private:
  struct Entry {
    std::string original_prompt;
    std::size_t gold = 0;
    std::size_t option_count = 2;
    bool is_original = true;
  };

  std::size_t answer_original(const Entry& e) const;
  double draw(const std::string& prompt, std::string_view salt) const;

  double q_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

}  // namespace promptsens
