#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <semaphore>
#include <thread>
#include <vector>

#include "promptsens/backends/backend.hpp"

namespace promptsens {

/// Runs fn(i) for i in [0, count) on at most `workers` threads. Results land
/// wherever fn writes them, so callers keep request order by indexing. The
/// first exception (lowest index) is rethrown after all tasks finish.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(count, workers < 1 ? 1 : static_cast<std::size_t>(workers));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) run(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Decorator that caps in-flight complete() calls across all threads and
/// retries transport errors with backoff.
class ThrottledBackend : public Backend {
 public:
  ThrottledBackend(Backend& inner, int max_in_flight, RetryPolicy retry);

  std::string id() const override { return inner_.id(); }
  CompletionResult complete(const CompletionRequest& request) const override;
  bool supports_gradients() const override { return inner_.supports_gradients(); }
  GradientMap gradients(const std::string& prompt, const std::string& target) const override {
    return inner_.gradients(prompt, target);
  }
  std::string infill(const std::string& text, WordRange mask) const override { return inner_.infill(text, mask); }
  void observe_instance(const std::string& original_prompt, const std::vector<std::string>& variant_prompts,
                        const CanonicalLabel& gold, std::size_t option_count) override {
    inner_.observe_instance(original_prompt, variant_prompts, gold, option_count);
  }

 private:
  Backend& inner_;
  mutable std::counting_semaphore<4096> slots_;
  RetryPolicy retry_;
};

}  // namespace promptsens
