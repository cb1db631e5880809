#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "promptsens/core/types.hpp"

namespace promptsens {

/// Maps raw model output into the label space.
///
/// Classification / multiple choice: the first standalone integer token, kept
/// only if it lies in [0, option_count). Open numeric: the last number in the
/// text (sign and decimal point allowed, thousands separators stripped),
/// normalized. Anything else is NONCOMPLIANT.
CanonicalLabel canonicalize(std::string_view raw, TaskKind kind, std::size_t option_count);

// "+001,825.50" -> "1825.5"; nullopt when `text` is not a plain decimal.
std::optional<std::string> normalize_decimal(std::string_view text);

}  // namespace promptsens
