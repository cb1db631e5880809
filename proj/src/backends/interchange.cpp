#include "promptsens/backends/interchange.hpp"

#include <fstream>

#include "json.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

using nlohmann::json;

InterchangeRecord interchange_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("record is not an object");
  for (const char* key : {"instance_id", "target", "tokens", "grads"}) {
    if (!j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  }
  InterchangeRecord r;
  try {
    r.instance_id = j["instance_id"].is_string() ? j["instance_id"].get<std::string>() : j["instance_id"].dump();
    r.target = j["target"].get<std::string>();
    for (const json& t : j["tokens"]) {
      r.map.tokens.push_back({t.at("text").get<std::string>(), t.at("start").get<std::size_t>(),
                              t.at("end").get<std::size_t>()});
    }
    for (const json& g : j["grads"]) {
      std::vector<double> v;
      v.reserve(g.size());
      for (const json& x : g) {
        if (!x.is_number()) throw InvalidArgument("non-numeric gradient entry");
        v.push_back(x.get<double>());
      }
      r.map.grads.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("schema violation: ") + e.what());
  }
  if (r.map.tokens.empty()) throw InvalidArgument("record has no tokens");
  r.map.validate();
  for (std::size_t i = 0; i < r.map.tokens.size(); ++i) {
    const auto& t = r.map.tokens[i];
    if (t.end - t.start != t.text.size()) {
      throw InvalidArgument("token " + std::to_string(i) + " text length disagrees with its offsets");
    }
  }
  return r;
}

std::string interchange_to_json(const InterchangeRecord& record) {
  json tokens = json::array();
  for (const auto& t : record.map.tokens) tokens.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
  json j = {{"instance_id", record.instance_id},
            {"target", record.target},
            {"tokens", std::move(tokens)},
            {"grads", record.map.grads}};
  return j.dump();
}

InterchangeFile load_interchange(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open interchange file");
  InterchangeFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.records.push_back(interchange_from_json(line));
    } catch (const InvalidArgument& e) {
      out.rejected.push_back({lineno, e.what()});
    }
  }
  return out;
}

}  // namespace promptsens
