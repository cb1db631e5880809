#include "promptsens/backends/factory.hpp"

#include <cctype>
#include <set>

#include "promptsens/backends/http.hpp"
#include "promptsens/backends/mock.hpp"
#include "promptsens/backends/tiny_lm.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

using nlohmann::json;

namespace {

template <class T>
T get_or(const json& config, const char* key, T fallback) {
  if (!config.contains(key)) return fallback;
  try {
    return config[key].get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("backend config: bad value for '") + key + "'");
  }
}

std::unique_ptr<Backend> make_mock(const json& c) {
  const std::string kind = get_or<std::string>(c, "kind", "constant");
  if (kind == "constant") return std::make_unique<MockBackend>(MockBackend::constant(get_or<std::string>(c, "text", "0")));
  if (kind == "instability") {
    return std::make_unique<InstabilityMock>(get_or<double>(c, "q", 0.0), get_or<std::uint64_t>(c, "seed", 0));
  }
  if (kind == "marker") {
    return std::make_unique<MockBackend>(MockBackend::marker_flip(get_or<std::string>(c, "marker", "#"),
                                                                  get_or<std::string>(c, "base", "0"),
                                                                  get_or<std::string>(c, "flipped", "1")));
  }
  if (kind == "table") {
    auto answers = get_or<std::map<std::string, std::string>>(c, "answers", {});
    std::optional<std::string> fallback;
    if (c.contains("fallback")) fallback = get_or<std::string>(c, "fallback", "");
    return std::make_unique<MockBackend>(MockBackend::table(std::move(answers), fallback));
  }
  throw InvalidArgument("mock backend: unknown kind '" + kind + "'");
}

}  // namespace

std::vector<std::string> tiny_lm_vocab(const std::vector<std::string>& corpus) {
  std::set<std::string> words;
  for (char c = '0'; c <= '9'; ++c) words.insert(std::string(1, c));
  for (int c = 33; c < 127; ++c) {
    if (std::ispunct(c)) words.insert(std::string(1, static_cast<char>(c)));
  }
  for (const std::string& text : corpus) {
    std::size_t i = 0;
    while (i < text.size()) {
      if (std::isalnum(static_cast<unsigned char>(text[i]))) {
        const std::size_t b = i;
        while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
        words.insert(text.substr(b, i - b));
      } else {
        ++i;
      }
    }
  }
  std::vector<std::string> out{"<unk>"};
  out.insert(out.end(), words.begin(), words.end());
  return out;
}

std::unique_ptr<Backend> make_backend(const std::string& id, const json& config,
                                      const std::vector<std::string>& corpus) {
  const json c = config.is_null() ? json::object() : config;
  if (!c.is_object()) throw InvalidArgument("backend config must be a JSON object");
  if (id == "mock") return make_mock(c);
  if (id == "tiny-lm") {
    auto vocab = c.contains("vocab") ? get_or<std::vector<std::string>>(c, "vocab", {}) : tiny_lm_vocab(corpus);
    return std::make_unique<TinyLm>(get_or<std::uint64_t>(c, "seed", 0), std::move(vocab),
                                    get_or<std::size_t>(c, "dim", 16), get_or<std::size_t>(c, "context", 64));
  }
  if (id == "http") {
    HttpConfig h;
    h.base_url = get_or<std::string>(c, "base_url", h.base_url);
    h.model = get_or<std::string>(c, "model", h.model);
    h.api_key_env = get_or<std::string>(c, "api_key_env", h.api_key_env);
    h.timeout_s = get_or<int>(c, "timeout_s", h.timeout_s);
    h.top_logprobs = get_or<int>(c, "top_logprobs", h.top_logprobs);
    return std::make_unique<HttpBackend>(std::move(h));
  }
  throw InvalidArgument("unknown backend '" + id + "' (expected mock, tiny-lm or http)");
}

}  // namespace promptsens
