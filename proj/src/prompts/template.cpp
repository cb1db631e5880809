#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "promptsens/datasets/dataset.hpp"
#include "promptsens/error.hpp"
#include "promptsens/prompts/prompts.hpp"

namespace promptsens {

std::string_view to_string(SegmentTag tag) {
  switch (tag) {
    case SegmentTag::input: return "input";
    case SegmentTag::prompt: return "prompt";
    case SegmentTag::knowledge: return "knowledge";
    case SegmentTag::option: return "option";
    case SegmentTag::target: return "target";
  }
  return "prompt";
}

SegmentTag segment_tag_from_string(std::string_view name) {
  if (name == "input") return SegmentTag::input;
  if (name == "prompt") return SegmentTag::prompt;
  if (name == "knowledge") return SegmentTag::knowledge;
  if (name == "option") return SegmentTag::option;
  if (name == "target") return SegmentTag::target;
  throw TemplateError("unknown segment tag '" + std::string(name) + "'");
}

namespace {

bool is_slot_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Checks brace syntax; returns the slot names in order.
std::vector<std::string> slots_of(const std::string& pattern) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '}') throw TemplateError("stray '}' in pattern: " + pattern);
    if (pattern[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < pattern.size() && is_slot_char(pattern[j])) ++j;
    if (j == i + 1 || j == pattern.size() || pattern[j] != '}') {
      throw TemplateError("malformed slot in pattern: " + pattern);
    }
    out.push_back(pattern.substr(i + 1, j - i - 1));
    i = j;
  }
  return out;
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Label shown before each input field in labeled layouts, and the fields in
// display order.
std::vector<std::pair<std::string, std::string>> input_fields(const Instance& sample, InstanceShape shape) {
  switch (shape) {
    case InstanceShape::pair: return {{"PREMISE", "premise"}, {"HYPOTHESIS", "hypothesis"}};
    case InstanceShape::multiple_choice:
    case InstanceShape::numeric: return {{"QUESTION", "question"}};
    case InstanceShape::single: break;
  }
  for (const char* name : {"sentence", "input", "text"}) {
    if (sample.has_field(name)) return {{std::string(name) == "sentence" ? "SENTENCE" : "INPUT", name}};
  }
  if (sample.fields.size() == 1) return {{upper(sample.fields.begin()->first), sample.fields.begin()->first}};
  throw TemplateError("cannot infer the input field of instance '" + sample.id + "'");
}

struct Builder {
  std::vector<LayoutPart> parts;
  void add(SegmentTag tag, std::string text) { parts.push_back({tag, std::move(text)}); }
  void p(std::string text) { add(SegmentTag::prompt, std::move(text)); }
};

}  // namespace

void PromptTemplate::validate() const {
  if (layout.empty()) throw TemplateError("template '" + id + "' has an empty layout");
  bool has_input = false;
  for (const LayoutPart& part : layout) {
    const auto slots = slots_of(part.pattern);
    if (part.tag == SegmentTag::input) {
      has_input = true;
      if (slots.size() != 1 || part.pattern != "{" + slots.front() + "}") {
        throw TemplateError("template '" + id + "': input parts must be exactly one field slot, got '" +
                            part.pattern + "'");
      }
    }
  }
  if (!has_input) throw TemplateError("template '" + id + "' has no input segment");
  slots_of(exemplar_answer);
  if (max_new_tokens < 1) throw TemplateError("template '" + id + "': max_new_tokens must be >= 1");
}

InstanceShape shape_of(const Instance& instance) {
  if (instance.task_kind == TaskKind::open_numeric) return InstanceShape::numeric;
  if (instance.task_kind == TaskKind::multiple_choice) return InstanceShape::multiple_choice;
  if (instance.has_field("premise") && instance.has_field("hypothesis")) return InstanceShape::pair;
  return InstanceShape::single;
}

PromptTemplate builtin_template(std::string_view id, const Instance& sample, std::string instruction) {
  const InstanceShape shape = shape_of(sample);
  const auto fields = input_fields(sample, shape);
  const bool mc = shape == InstanceShape::multiple_choice;
  const bool classification = shape == InstanceShape::single || shape == InstanceShape::pair;

  PromptTemplate t;
  t.id = std::string(id);
  Builder b;

  // Fields one per line, optionally "LABEL: " prefixed; `gold_after` appends
  // the embedded answer sentence after the last field.
  auto body = [&](bool labeled, bool gold_after, bool bob) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) b.p("\n");
      if (labeled) b.p(fields[i].first + ": ");
      if (bob) b.p("Bob said, \"");
      b.add(SegmentTag::input, "{" + fields[i].second + "}");
      if (bob) b.p("\"");
    }
    if (gold_after) b.add(SegmentTag::target, " The answer is {gold}.");
  };
  auto options_line = [&](const char* label) {
    b.p(std::string("\n") + label);
    b.add(SegmentTag::option, "{options_list}");
  };
  auto question_or_options = [&](const char* suffix) {
    if (classification) b.p(std::string("\nQUESTION: Is this {options_or}") + suffix + "?");
    if (mc) options_line("OPTIONS: ");
  };

  if (id == "base_a" || id == "zero_a" || id == "cot_base_a") {
    body(false, id == "zero_a", false);
    if (mc) options_line("");
    if (id == "cot_base_a") {
      b.p("\nLet's think step by step.");
      t.exemplar_answer = " {chain} So the answer is {gold}.";
    } else {
      b.p("\n");
      t.exemplar_answer = "{gold}";
    }
  } else if (id == "base_b" || id == "cot") {
    body(true, false, false);
    question_or_options("");
    if (id == "cot") {
      b.p("\nANSWER: Let's think step by step.");
      t.exemplar_answer = " {chain} So the answer is {gold}.";
    } else {
      b.p("\nANSWER:");
    }
  } else if (id == "zero_b") {
    body(true, true, false);
    if (mc) options_line("OPTIONS: ");
    b.p("\nANSWER:");
  } else if (id == "cfp") {
    body(shape != InstanceShape::single, false, true);
    if (classification) b.p("\nQUESTION: Is this {options_or} in Bob's opinion?");
    if (mc) {
      options_line("OPTIONS: ");
      b.p("\nQUESTION: Which option is correct in Bob's opinion?");
    }
    if (shape == InstanceShape::numeric) b.p("\nQUESTION: What is the answer in Bob's opinion?");
    b.p("\nANSWER:");
  } else if (id == "ape") {
    t.instruction = instruction.empty() ? std::string(kDefaultApeInstruction) : std::move(instruction);
    b.p("INSTRUCTION: {instruction}\nINPUT: ");
    body(false, false, false);
    if (mc) options_line("OPTIONS: ");
    b.p("\nOUTPUT:");
  } else if (id == "gkp") {
    if (shape == InstanceShape::numeric) throw TemplateError("gkp needs an instance with options");
    b.p("KNOWLEDGE: ");
    b.add(SegmentTag::knowledge, "{knowledge}");
    b.p("\nINPUT: ");
    body(false, false, false);
    options_line("OPTIONS: ");
    b.p("\nOUTPUT:");
  } else {
    throw TemplateError("unknown template id '" + std::string(id) + "'");
  }

  if (id == "cot" || id == "cot_base_a") {
    t.extraction = AnswerExtraction::after_cue;
    t.max_new_tokens = shape == InstanceShape::numeric ? 128 : 64;
  } else if (shape == InstanceShape::numeric) {
    t.max_new_tokens = 128;
  }
  if (!instruction.empty() && t.instruction.empty()) t.instruction = std::move(instruction);
  t.layout = std::move(b.parts);
  t.validate();
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open template file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  PromptTemplate t;
  try {
    t.id = j.at("id").get<std::string>();
    for (const auto& part : j.at("layout")) {
      t.layout.push_back({segment_tag_from_string(part.at("tag").get<std::string>()), part.at("text").get<std::string>()});
    }
    t.exemplar_answer = j.value("exemplar_answer", t.exemplar_answer);
    t.instruction = j.value("instruction", "");
    t.option_count = j.value("option_count", std::size_t{0});
    t.max_new_tokens = j.value("max_new_tokens", t.max_new_tokens);
    const std::string extraction = j.value("extraction", "direct");
    if (extraction == "after_cue") {
      t.extraction = AnswerExtraction::after_cue;
    } else if (extraction != "direct") {
      throw TemplateError("unknown extraction '" + extraction + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  t.validate();
  return t;
}

std::vector<Instance> load_exemplars(const std::filesystem::path& path, std::string_view format_id,
                                     std::size_t count) {
  auto all = load_dataset(path, format_id);
  if (all.size() > count) all.resize(count);
  return all;
}

}  // namespace promptsens
