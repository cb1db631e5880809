#include <cctype>

#include "promptsens/error.hpp"
#include "promptsens/prompts/prompts.hpp"

namespace promptsens {

namespace {

std::string join_options(const Instance& instance, bool with_or) {
  const auto pairs = map_options(instance);
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += (with_or && i + 1 == pairs.size()) ? ", or " : ", ";
    out += "(" + std::to_string(pairs[i].first) + ") " + pairs[i].second;
  }
  return out;
}

std::string slot_value(const std::string& name, const PromptTemplate& tmpl, const Instance& instance) {
  if (name == "options_or") return join_options(instance, true);
  if (name == "options_list") return join_options(instance, false);
  if (name == "gold") {
    if (instance.gold.empty()) throw TemplateError("instance '" + instance.id + "' has no gold label for {gold}");
    return instance.gold_label().value();
  }
  if (name == "instruction") {
    if (tmpl.instruction.empty()) throw TemplateError("template '" + tmpl.id + "' needs an instruction");
    return tmpl.instruction;
  }
  if (!instance.has_field(name)) {
    throw TemplateError("instance '" + instance.id + "' has no field '" + name + "' for template '" + tmpl.id + "'");
  }
  return instance.fields.at(name);
}

// Expands one pattern; `first_field` receives the first instance field used.
std::string fill(const std::string& pattern, const PromptTemplate& tmpl, const Instance& instance,
                 std::string* first_field) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '{') {
      out += pattern[i];
      continue;
    }
    const std::size_t close = pattern.find('}', i);
    const std::string name = pattern.substr(i + 1, close - i - 1);
    out += slot_value(name, tmpl, instance);
    if (first_field && first_field->empty() && instance.has_field(name)) *first_field = name;
    i = close;
  }
  return out;
}

void check_options(const PromptTemplate& tmpl, const Instance& instance) {
  if (tmpl.option_count && instance.options.size() != tmpl.option_count) {
    throw TemplateError("template '" + tmpl.id + "' enumerates " + std::to_string(tmpl.option_count) +
                        " options but instance '" + instance.id + "' has " + std::to_string(instance.options.size()));
  }
}

}  // namespace

std::vector<std::pair<std::size_t, std::string>> map_options(const Instance& instance) {
  if (instance.options.size() < 2) {
    throw TemplateError("instance '" + instance.id + "' needs at least two options to map");
  }
  std::vector<std::pair<std::size_t, std::string>> out;
  for (std::size_t i = 0; i < instance.options.size(); ++i) out.emplace_back(i, instance.options[i]);
  return out;
}

std::string_view RenderedPrompt::segment(SegmentTag tag, std::string_view field) const {
  for (const Span& s : spans) {
    if (s.tag == tag && (field.empty() || s.field == field)) {
      return std::string_view(text).substr(s.begin, s.end - s.begin);
    }
  }
  return {};
}

RenderedPrompt render(const PromptTemplate& tmpl, const Instance& instance, const std::vector<Instance>& exemplars) {
  tmpl.validate();
  check_options(tmpl, instance);
  RenderedPrompt out;
  for (const Instance& ex : exemplars) {
    check_options(tmpl, ex);
    for (const LayoutPart& part : tmpl.layout) out.text += fill(part.pattern, tmpl, ex, nullptr);
    out.text += fill(tmpl.exemplar_answer, tmpl, ex, nullptr);
    out.text += "\n\n";
  }
  out.exemplar_end = out.text.size();
  for (const LayoutPart& part : tmpl.layout) {
    std::string field;
    const std::string piece = fill(part.pattern, tmpl, instance, &field);
    if (piece.empty()) continue;
    Span span{part.tag, out.text.size(), out.text.size() + piece.size(),
              part.tag == SegmentTag::prompt || part.tag == SegmentTag::option ? std::string() : field};
    out.text += piece;
    // Neighbouring parts with the same tag and field form one span.
    if (!out.spans.empty() && out.spans.back().tag == span.tag && out.spans.back().field == span.field &&
        span.tag != SegmentTag::input) {
      out.spans.back().end = span.end;
    } else {
      out.spans.push_back(std::move(span));
    }
  }
  return out;
}

}  // namespace promptsens
