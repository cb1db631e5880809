#include <cctype>

#include "promptsens/core/canonicalize.hpp"
#include "promptsens/prompts/prompts.hpp"

namespace promptsens {

CanonicalLabel extract_answer(std::string_view raw, const PromptTemplate& tmpl, const Instance& instance) {
  const std::size_t option_count = instance.options.size();
  if (instance.task_kind == TaskKind::open_numeric) return canonicalize(raw, TaskKind::open_numeric, 0);
  if (tmpl.extraction == AnswerExtraction::after_cue) {
    std::string lower(raw);
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    constexpr std::string_view cue = "the answer is";
    const std::size_t at = lower.rfind(cue);
    if (at == std::string::npos) return CanonicalLabel::noncompliant();
    return canonicalize(raw.substr(at + cue.size()), instance.task_kind, option_count);
  }
  return canonicalize(raw, instance.task_kind, option_count);
}

}  // namespace promptsens
