#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "promptsens/backends/backend.hpp"

namespace promptsens {

/// One line of a gradient interchange file:
/// {"instance_id", "target", "tokens": [{"text", "start", "end"}], "grads": [[...]]}
struct InterchangeRecord {
  std::string instance_id;
  std::string target;
  GradientMap map;
};

struct InterchangeRejection {
  std::size_t line = 0;
  std::string reason;
};

struct InterchangeFile {
  std::vector<InterchangeRecord> records;
  std::vector<InterchangeRejection> rejected;
};

// Parses and validates each record independently; malformed lines are
// collected in `rejected` instead of aborting the load. Throws ParseError only
// when the file cannot be opened.
InterchangeFile load_interchange(const std::filesystem::path& path);

// Parses one record; throws InvalidArgument on schema violations.
InterchangeRecord interchange_from_json(const std::string& line);
std::string interchange_to_json(const InterchangeRecord& record);

}  // namespace promptsens
