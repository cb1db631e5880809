#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "promptsens/core/types.hpp"

namespace promptsens {

/// JSONL record layouts accepted by load_dataset:
///
///   cola            {"id"?, "sentence", "gold", "options"?}
///   nli_pair        {"id"?, "premise", "hypothesis", "gold", "options"?}
///   multiple_choice {"id"?, "question", "options", "gold", "knowledge"?}
///   open_numeric    {"id"?, "question", "gold"}
///   generic         {"id"?, "fields": {...}, "options"?, "gold", "task_kind"?}
///
/// Extra string members on the fixed layouts become additional fields
/// (e.g. "knowledge", "chain"). A missing id defaults to the 1-based line number.
std::vector<Instance> load_dataset(const std::filesystem::path& path, std::string_view format_id);

// Parses one JSONL line; `line` is used for error messages only.
Instance parse_instance_line(std::string_view text, std::string_view format_id,
                             const std::string& path, std::size_t line);

// Field perturbed when the manifest does not name one.
std::string default_target_field(std::string_view format_id);

struct WordSpan {
  std::size_t begin;
  std::size_t end;
};

// Whitespace-delimited word tokens with their byte offsets.
std::vector<WordSpan> split_words(std::string_view text);
std::vector<std::string> words_of(std::string_view text);

}  // namespace promptsens
