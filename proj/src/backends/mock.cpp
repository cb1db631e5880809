#include "promptsens/backends/mock.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "promptsens/core/hash.hpp"
#include "promptsens/core/rng.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

CompletionResult answer(const CompletionRequest& req, const std::string& text) {
  CompletionResult r;
  r.text = text;
  if (req.candidate_set) r.candidate_logprobs = peaked_logprobs(*req.candidate_set, trim(text));
  return r;
}

}  // namespace

std::map<std::string, double> peaked_logprobs(const std::vector<std::string>& candidates,
                                              const std::string& chosen, double p_chosen) {
  std::map<std::string, double> out;
  const bool present = std::find(candidates.begin(), candidates.end(), chosen) != candidates.end();
  const std::size_t rest = candidates.size() - (present ? 1 : 0);
  const double p_rest = present ? (rest ? (1.0 - p_chosen) / static_cast<double>(rest) : 0.0)
                                : 1.0 / static_cast<double>(candidates.size());
  for (const std::string& c : candidates) {
    const double p = (present && c == chosen) ? (rest ? p_chosen : 1.0) : p_rest;
    out[c] = std::log(p);
  }
  return out;
}

MockBackend::MockBackend(Responder responder, std::string id)
    : responder_(std::move(responder)), id_(std::move(id)) {}

MockBackend MockBackend::constant(std::string text) {
  return MockBackend([text](const CompletionRequest& req) { return answer(req, text); }, "mock:constant");
}

MockBackend MockBackend::table(std::map<std::string, std::string> answers, std::optional<std::string> fallback) {
  return MockBackend(
      [answers = std::move(answers), fallback](const CompletionRequest& req) {
        auto it = answers.find(req.prompt);
        if (it != answers.end()) return answer(req, it->second);
        if (fallback) return answer(req, *fallback);
        throw BackendRefused("mock table has no entry for the prompt");
      },
      "mock:table");
}

MockBackend MockBackend::marker_flip(std::string marker, std::string base, std::string flipped) {
  return MockBackend(
      [marker = std::move(marker), base = std::move(base), flipped = std::move(flipped)](const CompletionRequest& req) {
        return answer(req, req.prompt.find(marker) != std::string::npos ? flipped : base);
      },
      "mock:marker");
}

CompletionResult MockBackend::complete(const CompletionRequest& request) const {
  request.validate();
  return responder_(request);
}

std::string MockBackend::infill(const std::string& text, WordRange mask) const {
  if (!infill_table_.empty()) {
    auto it = infill_table_.find(text);
    if (it != infill_table_.end()) return it->second;
  }
  return Backend::infill(text, mask);
}

InstabilityMock::InstabilityMock(double q, std::uint64_t seed) : q_(q), seed_(seed) {
  if (q < 0.0 || q > 1.0) throw InvalidArgument("instability mock: q must lie in [0,1]");
}

std::string InstabilityMock::id() const {
  char buf[48];
  std::snprintf(buf, sizeof buf, "mock:instability:%.2f", q_);
  return buf;
}

double InstabilityMock::draw(const std::string& prompt, std::string_view salt) const {
  Rng rng(mix_seed(seed_, fnv1a64(salt, fnv1a64(prompt))));
  return rng.uniform();
}

std::size_t InstabilityMock::answer_original(const Entry& e) const {
  if (draw(e.original_prompt, "original") < 1.0 - q_) return e.gold;
  // Wrong answer: any other option, chosen by hash.
  const std::size_t shift = 1 + static_cast<std::size_t>(draw(e.original_prompt, "wrong") *
                                                         static_cast<double>(e.option_count - 1));
  return (e.gold + std::min(shift, e.option_count - 1)) % e.option_count;
}

void InstabilityMock::observe_instance(const std::string& original_prompt,
                                       const std::vector<std::string>& variant_prompts,
                                       const CanonicalLabel& gold, std::size_t option_count) {
  auto idx = gold.as_index();
  if (!idx || option_count < 2) throw InvalidArgument("instability mock needs an index-labeled task");
  std::lock_guard lock(mu_);
  entries_[original_prompt] = Entry{original_prompt, *idx, option_count, true};
  for (const std::string& v : variant_prompts) {
    if (v == original_prompt) continue;
    entries_[v] = Entry{original_prompt, *idx, option_count, false};
  }
}

CompletionResult InstabilityMock::complete(const CompletionRequest& request) const {
  request.validate();
  Entry e;
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(request.prompt);
    if (it == entries_.end()) throw BackendRefused("instability mock: prompt was not announced");
    e = it->second;
  }
  std::size_t label = answer_original(e);
  if (!e.is_original && draw(request.prompt, "flip") < q_) label = (label + 1) % e.option_count;

  CompletionResult r;
  r.text = " " + std::to_string(label);
  if (request.candidate_set) r.candidate_logprobs = peaked_logprobs(*request.candidate_set, std::to_string(label), 0.8);
  return r;
}

}  // namespace promptsens
