#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptsens/core/types.hpp"

namespace promptsens {

enum class SegmentTag { input, prompt, knowledge, option, target };

std::string_view to_string(SegmentTag tag);
SegmentTag segment_tag_from_string(std::string_view name);

// Text pattern with {slot} placeholders, tagged with the segment it renders
// into. Slots: any instance field name, plus options_or ("(0) a, or (1) b"),
// options_list ("(0) a, (1) b"), gold, instruction and chain.
struct LayoutPart {
  SegmentTag tag = SegmentTag::prompt;
  std::string pattern;
};

enum class AnswerExtraction { direct, after_cue };

struct PromptTemplate {
  std::string id;
  // Test-instance layout; ends at the answer cue.
  std::vector<LayoutPart> layout;
  // Appended after the layout for demonstrations, e.g. " {gold}".
  std::string exemplar_answer = " {gold}";
  std::string instruction;
  // When non-empty, instances must carry exactly this many options.
  std::size_t option_count = 0;
  AnswerExtraction extraction = AnswerExtraction::direct;
  int max_new_tokens = 2;

  // Throws TemplateError: empty layout, unknown slot syntax, or an input part
  // that is not exactly one field slot.
  void validate() const;
};

// Layout family an instance belongs to, derived from its fields and kind.
enum class InstanceShape { single, pair, multiple_choice, numeric };

InstanceShape shape_of(const Instance& instance);

inline constexpr std::string_view kBuiltinTemplateIds[] = {"base_a", "base_b", "zero_a", "zero_b", "cfp",
                                                           "cot",    "cot_base_a", "ape", "gkp"};
inline constexpr std::string_view kDefaultApeInstruction =
    "determine whether each sentence was (1) acceptable or (0) unacceptable based on its structure and grammar.";

// Built-in layout for `id`, shaped after `sample` (field names, options).
// Throws TemplateError for unknown ids and for gkp on numeric tasks.
PromptTemplate builtin_template(std::string_view id, const Instance& sample, std::string instruction = {});

// JSON: {"id", "layout": [{"tag", "text"}], "exemplar_answer"?, "instruction"?,
//        "option_count"?, "extraction"?: "direct"|"after_cue", "max_new_tokens"?}
PromptTemplate load_template(const std::filesystem::path& path);

// Demonstrations in any dataset layout; `count` keeps the first entries.
std::vector<Instance> load_exemplars(const std::filesystem::path& path, std::string_view format_id,
                                     std::size_t count);

struct Span {
  SegmentTag tag = SegmentTag::prompt;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string field;  // instance field for input/knowledge spans

  friend bool operator==(const Span&, const Span&) = default;
};

struct RenderedPrompt {
  std::string text;
  // Disjoint, ascending, covering [exemplar_end, text.size()) exactly.
  std::vector<Span> spans;
  std::size_t exemplar_begin = 0;
  std::size_t exemplar_end = 0;

  // Substring for the first span of `tag` (optionally restricted to `field`).
  std::string_view segment(SegmentTag tag, std::string_view field = {}) const;

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

// Index/option pairs rendered as "(i) option". Throws TemplateError when
// fewer than two options are present.
std::vector<std::pair<std::size_t, std::string>> map_options(const Instance& instance);

// Exemplars joined by blank lines, then the filled test instance.
RenderedPrompt render(const PromptTemplate& tmpl, const Instance& instance,
                      const std::vector<Instance>& exemplars = {});

CanonicalLabel extract_answer(std::string_view raw, const PromptTemplate& tmpl, const Instance& instance);

}  // namespace promptsens
