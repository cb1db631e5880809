#include "promptsens/datasets/dataset.hpp"

#include <cctype>
#include <fstream>
#include <set>

#include "json.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

using nlohmann::json;

namespace {

const std::set<std::string> kFormats{"cola", "nli_pair", "multiple_choice", "open_numeric", "generic"};

std::string gold_text(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) return j.dump();
  throw InvalidArgument("gold must be a string or number");
}

std::string require_string(const json& rec, const char* key) {
  if (!rec.contains(key)) throw InvalidArgument(std::string("missing \"") + key + "\"");
  if (!rec.at(key).is_string()) throw InvalidArgument(std::string("\"") + key + "\" must be a string");
  return rec.at(key).get<std::string>();
}

void copy_extra_fields(const json& rec, Instance& inst) {
  static const std::set<std::string> kReserved{"id", "gold", "options", "task_kind", "fields"};
  for (const auto& [key, value] : rec.items()) {
    if (kReserved.count(key) || !value.is_string()) continue;
    inst.fields.emplace(key, value.get<std::string>());
  }
}

}  // namespace

std::string default_target_field(std::string_view format_id) {
  if (format_id == "cola") return "sentence";
  if (format_id == "nli_pair") return "hypothesis";
  if (format_id == "multiple_choice" || format_id == "open_numeric") return "question";
  return "input";
}

Instance parse_instance_line(std::string_view text, std::string_view format_id,
                             const std::string& path, std::size_t line) {
  const std::string fmt(format_id);
  if (!kFormats.count(fmt)) throw InvalidArgument("unknown dataset format '" + fmt + "'");
  json rec;
  try {
    rec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path, line, std::string("invalid JSON: ") + e.what());
  }
  if (!rec.is_object()) throw ParseError(path, line, "record is not a JSON object");

  Instance inst;
  try {
    if (rec.contains("id")) {
      inst.id = rec.at("id").is_string() ? rec.at("id").get<std::string>() : rec.at("id").dump();
    } else {
      inst.id = std::to_string(line);
    }
    if (!rec.contains("gold")) throw InvalidArgument("missing gold label");
    inst.gold = gold_text(rec.at("gold"));
    if (rec.contains("options")) inst.options = rec.at("options").get<std::vector<std::string>>();

    if (fmt == "cola") {
      inst.fields["sentence"] = require_string(rec, "sentence");
      if (inst.options.empty()) inst.options = {"unacceptable", "acceptable"};
      inst.task_kind = TaskKind::classification;
      copy_extra_fields(rec, inst);
    } else if (fmt == "nli_pair") {
      inst.fields["premise"] = require_string(rec, "premise");
      inst.fields["hypothesis"] = require_string(rec, "hypothesis");
      if (inst.options.empty()) inst.options = {"entailment", "neutral", "contradiction"};
      inst.task_kind = TaskKind::classification;
      copy_extra_fields(rec, inst);
    } else if (fmt == "multiple_choice") {
      inst.fields["question"] = require_string(rec, "question");
      inst.task_kind = TaskKind::multiple_choice;
      copy_extra_fields(rec, inst);
    } else if (fmt == "open_numeric") {
      inst.fields["question"] = require_string(rec, "question");
      inst.task_kind = TaskKind::open_numeric;
      copy_extra_fields(rec, inst);
    } else {
      if (!rec.contains("fields") || !rec.at("fields").is_object()) {
        throw InvalidArgument("generic record needs a \"fields\" object");
      }
      inst.fields = rec.at("fields").get<std::map<std::string, std::string>>();
      inst.task_kind = task_kind_from_string(rec.value("task_kind", std::string("classification")));
    }
    validate_instance(inst);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(path, line, e.what());
  } catch (const json::exception& e) {
    throw ParseError(path, line, e.what());
  }
  return inst;
}

std::vector<Instance> load_dataset(const std::filesystem::path& path, std::string_view format_id) {
  if (!kFormats.count(std::string(format_id))) {
    throw InvalidArgument("unknown dataset format '" + std::string(format_id) + "'");
  }
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path.string());

  std::vector<Instance> out;
  std::set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Instance inst = parse_instance_line(text, format_id, path.string(), line);
    if (!ids.insert(inst.id).second) throw ParseError(path.string(), line, "duplicate id '" + inst.id + "'");
    out.push_back(std::move(inst));
  }
  if (out.empty()) throw DatasetError("dataset " + path.string() + " is empty");
  return out;
}

std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  for (const WordSpan& w : split_words(text)) out.emplace_back(text.substr(w.begin, w.end - w.begin));
  return out;
}

}  // namespace promptsens
