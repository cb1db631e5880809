#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptsens {

enum class TaskKind { classification, multiple_choice, open_numeric };

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);

/// A model answer mapped into the task's label space.
///
/// Holds a numeric option index ("0", "1", ...) for classification and
/// multiple-choice tasks, a normalized decimal string for open numeric
/// tasks, or the NONCOMPLIANT sentinel when nothing could be extracted.
class CanonicalLabel {
 public:
  static constexpr std::string_view kNoncompliantText = "NONCOMPLIANT";

  CanonicalLabel() : value_(kNoncompliantText) {}
  explicit CanonicalLabel(std::string value) : value_(std::move(value)) {}

  static CanonicalLabel noncompliant() { return CanonicalLabel(); }
  static CanonicalLabel index(std::size_t i) { return CanonicalLabel(std::to_string(i)); }

  const std::string& value() const noexcept { return value_; }
  bool compliant() const noexcept { return value_ != kNoncompliantText; }

  // Option index for classification labels; nullopt for NONCOMPLIANT or
  // non-integer values.
  std::optional<std::size_t> as_index() const;

  friend bool operator==(const CanonicalLabel&, const CanonicalLabel&) = default;
  friend auto operator<=>(const CanonicalLabel&, const CanonicalLabel&) = default;

 private:
  std::string value_;
};

/// One dataset example. Text parts are keyed by role ("sentence",
/// "premise", "hypothesis", "question", "knowledge", ...).
struct Instance {
  std::string id;
  std::map<std::string, std::string> fields;
  std::vector<std::string> options;
  std::string gold;
  TaskKind task_kind = TaskKind::classification;

  const std::string& field(const std::string& name) const;
  bool has_field(const std::string& name) const { return fields.count(name) != 0; }

  // Gold mapped through the same normalization as model outputs.
  CanonicalLabel gold_label() const;

  friend bool operator==(const Instance&, const Instance&) = default;
};

// Throws DatasetError when the task-kind invariants do not hold.
void validate_instance(const Instance& instance);

}  // namespace promptsens
