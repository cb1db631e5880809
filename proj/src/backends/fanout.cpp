#include "promptsens/backends/fanout.hpp"

#include "promptsens/error.hpp"

namespace promptsens {

ThrottledBackend::ThrottledBackend(Backend& inner, int max_in_flight, RetryPolicy retry)
    : inner_(inner), slots_(max_in_flight < 1 ? 1 : (max_in_flight > 4096 ? 4096 : max_in_flight)), retry_(retry) {}

CompletionResult ThrottledBackend::complete(const CompletionRequest& request) const {
  struct Slot {
    std::counting_semaphore<4096>& sem;
    explicit Slot(std::counting_semaphore<4096>& s) : sem(s) { sem.acquire(); }
    ~Slot() { sem.release(); }
  } slot(slots_);
  return complete_with_retry(inner_, request, retry_);
}

}  // namespace promptsens
