#include "promptsens/backends/http.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

#include "httplib.h"
#include "json.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

namespace {

using nlohmann::json;

bool has_space(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

const json& choice0(const json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw BackendRefused("http backend: response has no choices");
  }
  return body["choices"][0];
}

}  // namespace

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) throw InvalidArgument("http backend: model must be set");
  std::string url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("http backend: base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::post(const std::string& body) const {
  httplib::Client client(scheme_host_);
  if (!client.is_valid()) throw InvalidArgument("http backend: unsupported base_url " + config_.base_url);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(path_prefix_ + "/v1/completions", headers, body, "application/json");
  if (!res) throw TransportError("http backend: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("http backend: status " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw BackendRefused("http backend: status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  return res->body;
}

CompletionResult HttpBackend::complete(const CompletionRequest& request) const {
  request.validate();
  const bool need_logprobs = request.want_logprobs || request.candidate_set.has_value();
  json req = {{"model", config_.model},
              {"prompt", request.prompt},
              {"max_tokens", request.max_new_tokens},
              {"temperature", request.temperature},
              {"echo", false}};
  if (need_logprobs) req["logprobs"] = config_.top_logprobs;

  json body;
  try {
    body = json::parse(post(req.dump()));
  } catch (const json::exception& e) {
    throw BackendRefused(std::string("http backend: malformed response: ") + e.what());
  }

  CompletionResult result;
  try {
    const json& c = choice0(body);
    result.text = c.value("text", "");
    const json lp = c.contains("logprobs") ? c["logprobs"] : json();
    const bool have_lp = lp.is_object() && lp.contains("top_logprobs") && lp["top_logprobs"].is_array();

    if (request.want_logprobs && have_lp) {
      std::vector<TokenLogprobs> trace;
      const json& tops = lp["top_logprobs"];
      for (std::size_t i = 0; i < tops.size(); ++i) {
        TokenLogprobs t;
        if (lp.contains("tokens") && i < lp["tokens"].size()) t.token = lp["tokens"][i].get<std::string>();
        if (lp.contains("token_logprobs") && i < lp["token_logprobs"].size() && lp["token_logprobs"][i].is_number()) {
          t.logprob = lp["token_logprobs"][i].get<double>();
        }
        if (tops[i].is_object()) {
          for (auto it = tops[i].begin(); it != tops[i].end(); ++it) t.top.emplace_back(it.key(), it.value().get<double>());
        }
        std::sort(t.top.begin(), t.top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        trace.push_back(std::move(t));
      }
      result.token_logprobs = std::move(trace);
    }

    if (request.candidate_set) {
      if (!have_lp || lp["top_logprobs"].empty() || !lp["top_logprobs"][0].is_object()) {
        throw ScoringUnsupported("http backend: server returned no top_logprobs");
      }
      // Merge variants of the same candidate that differ only in surrounding
      // whitespace (" 1" and "1").
      std::map<std::string, std::vector<double>> seen;
      double floor = std::numeric_limits<double>::infinity();
      for (auto it = lp["top_logprobs"][0].begin(); it != lp["top_logprobs"][0].end(); ++it) {
        const double v = it.value().get<double>();
        seen[strip(it.key())].push_back(v);
        floor = std::min(floor, v);
      }
      std::map<std::string, double> scores;
      for (const std::string& cand : *request.candidate_set) {
        if (has_space(strip(cand))) {
          json ereq = {{"model", config_.model},     {"prompt", request.prompt + " " + cand},
                       {"max_tokens", 1},            {"temperature", 0.0},
                       {"logprobs", 1},              {"echo", true}};
          const json eb = json::parse(post(ereq.dump()));
          const json& elp = choice0(eb).at("logprobs");
          const auto& offsets = elp.at("text_offset");
          const auto& tlp = elp.at("token_logprobs");
          const std::size_t full = request.prompt.size() + 1 + cand.size();
          double sum = 0.0;
          for (std::size_t i = 0; i < offsets.size() && i < tlp.size(); ++i) {
            const auto off = offsets[i].get<std::size_t>();
            if (off >= request.prompt.size() && off < full && tlp[i].is_number()) sum += tlp[i].get<double>();
          }
          scores[cand] = sum;
          continue;
        }
        auto it = seen.find(strip(cand));
        scores[cand] = it == seen.end() ? floor : log_sum_exp(it->second);
      }
      std::vector<double> all;
      for (const auto& [k, v] : scores) all.push_back(v);
      const double total = log_sum_exp(all);
      if (total > 0.0) {
        for (auto& [k, v] : scores) v -= total;
      }
      result.candidate_logprobs = std::move(scores);
    }
  } catch (const json::exception& e) {
    throw BackendRefused(std::string("http backend: unexpected response shape: ") + e.what());
  }
  return result;
}

}  // namespace promptsens
