#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "promptsens/backends/backend.hpp"

namespace promptsens {

/// Builds a backend from its manifest id and config object.
///
///   mock     {"kind": "constant", "text"} | {"kind": "instability", "q", "seed"}
///            | {"kind": "marker", "marker", "base", "flipped"} | {"kind": "table", "answers", "fallback"?}
///   tiny-lm  {"seed", "dim", "context", "vocab"?}; without "vocab" the vocabulary
///            is <unk>, digits, ASCII punctuation and the words of `corpus`
///   http     {"base_url", "model", "api_key_env"?, "timeout_s"?, "top_logprobs"?}
std::unique_ptr<Backend> make_backend(const std::string& id, const nlohmann::json& config,
                                      const std::vector<std::string>& corpus = {});

// Sorted, de-duplicated vocabulary for the tiny LM.
std::vector<std::string> tiny_lm_vocab(const std::vector<std::string>& corpus);

}  // namespace promptsens
