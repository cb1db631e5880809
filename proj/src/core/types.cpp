#include "promptsens/core/types.hpp"

#include <charconv>

#include "promptsens/core/canonicalize.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::classification: return "classification";
    case TaskKind::multiple_choice: return "multiple_choice";
    case TaskKind::open_numeric: return "open_numeric";
  }
  return "classification";
}

TaskKind task_kind_from_string(std::string_view name) {
  if (name == "classification") return TaskKind::classification;
  if (name == "multiple_choice") return TaskKind::multiple_choice;
  if (name == "open_numeric") return TaskKind::open_numeric;
  throw InvalidArgument("unknown task kind '" + std::string(name) + "'");
}

std::optional<std::size_t> CanonicalLabel::as_index() const {
  if (value_.empty()) return std::nullopt;
  std::size_t out = 0;
  const char* first = value_.data();
  const char* last = first + value_.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return out;
}

const std::string& Instance::field(const std::string& name) const {
  auto it = fields.find(name);
  if (it == fields.end()) {
    throw DatasetError("instance '" + id + "' has no field '" + name + "'");
  }
  return it->second;
}

CanonicalLabel Instance::gold_label() const {
  if (task_kind == TaskKind::open_numeric) {
    auto norm = normalize_decimal(gold);
    return norm ? CanonicalLabel(*norm) : CanonicalLabel::noncompliant();
  }
  return CanonicalLabel(gold);
}

void validate_instance(const Instance& instance) {
  const std::string where = "instance '" + instance.id + "': ";
  if (instance.id.empty()) throw DatasetError("instance with empty id");
  if (instance.gold.empty()) throw DatasetError(where + "missing gold label");
  switch (instance.task_kind) {
    case TaskKind::classification:
    case TaskKind::multiple_choice: {
      if (instance.task_kind == TaskKind::multiple_choice && instance.options.empty()) {
        throw DatasetError(where + "multiple_choice requires options");
      }
      auto idx = CanonicalLabel(instance.gold).as_index();
      if (!idx) throw DatasetError(where + "gold '" + instance.gold + "' is not an option index");
      if (!instance.options.empty() && *idx >= instance.options.size()) {
        throw DatasetError(where + "gold index " + instance.gold + " out of range for " +
                           std::to_string(instance.options.size()) + " options");
      }
      break;
    }
    case TaskKind::open_numeric:
      if (!normalize_decimal(instance.gold)) {
        throw DatasetError(where + "gold '" + instance.gold + "' is not a decimal number");
      }
      break;
  }
}

}  // namespace promptsens
