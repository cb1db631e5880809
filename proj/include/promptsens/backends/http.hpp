#pragma once

#include <string>

#include "promptsens/backends/backend.hpp"

namespace promptsens {

struct HttpConfig {
  // scheme://host[:port], with or without a trailing slash.
  std::string base_url = "http://127.0.0.1:8000";
  std::string model;
  // Environment variable holding the bearer token; unset means no header.
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_s = 60;
  // Number of alternatives requested per generated token.
  int top_logprobs = 5;
};

/// OpenAI-compatible completions client.
///
/// Generation uses POST /v1/completions. Single-token candidates are scored
/// from the first generated token's top_logprobs; candidates missing from the
/// list get the smallest logprob observed there. Multi-token candidates are
/// scored by echoing prompt + candidate and summing the candidate's token
/// logprobs. Returned values are log-probabilities, not raw logits.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);

  std::string id() const override { return "http:" + config_.model; }
  CompletionResult complete(const CompletionRequest& request) const override;

 private:
  std::string post(const std::string& body) const;

  HttpConfig config_;
  std::string scheme_host_;
  std::string path_prefix_;
};

}  // namespace promptsens
