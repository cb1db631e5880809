#include "promptsens/core/canonicalize.hpp"

#include <cctype>

namespace promptsens {
namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

// Removes commas sitting between two digits ("1,825" -> "1825").
std::string strip_thousands(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == ',' && i > 0 && i + 1 < raw.size() && is_digit(raw[i - 1]) && is_digit(raw[i + 1])) {
      continue;
    }
    out.push_back(raw[i]);
  }
  return out;
}

CanonicalLabel first_index(std::string_view raw, std::size_t option_count) {
  const std::size_t n = raw.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_digit(raw[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_digit(raw[j])) ++j;
    const bool glued_left = i > 0 && is_word(raw[i - 1]);
    if (glued_left) {
      i = j;
      continue;
    }
    if (j + 1 < n && raw[j] == '.' && is_digit(raw[j + 1])) {
      // a decimal such as 0.5 is not an integer token
      j += 1;
      while (j < n && is_digit(raw[j])) ++j;
      i = j;
      continue;
    }
    if (j < n && is_word(raw[j])) {
      i = j;
      continue;
    }
    const bool negative = i > 0 && raw[i - 1] == '-' && (i == 1 || !is_word(raw[i - 2]));
    if (negative) return CanonicalLabel::noncompliant();

    std::size_t start = i;
    while (start + 1 < j && raw[start] == '0') ++start;
    if (j - start > 9) return CanonicalLabel::noncompliant();
    std::size_t value = 0;
    for (std::size_t p = start; p < j; ++p) value = value * 10 + static_cast<std::size_t>(raw[p] - '0');
    if (value < option_count) return CanonicalLabel::index(value);
    return CanonicalLabel::noncompliant();
  }
  return CanonicalLabel::noncompliant();
}

CanonicalLabel last_number(std::string_view raw_in) {
  const std::string raw = strip_thousands(raw_in);
  const std::size_t n = raw.size();
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < n) {
    const bool starts_fraction = raw[i] == '.' && i + 1 < n && is_digit(raw[i + 1]);
    if (!is_digit(raw[i]) && !starts_fraction) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    std::size_t j = i;
    while (j < n && is_digit(raw[j])) ++j;
    if (j + 1 < n && raw[j] == '.' && is_digit(raw[j + 1])) {
      ++j;
      while (j < n && is_digit(raw[j])) ++j;
    }
    if (begin > 0 && (raw[begin - 1] == '-' || raw[begin - 1] == '+') &&
        (begin == 1 || !is_word(raw[begin - 2]))) {
      --begin;
    }
    last = std::string(raw.substr(begin, j - begin));
    i = j;
  }
  if (!last) return CanonicalLabel::noncompliant();
  auto norm = normalize_decimal(*last);
  return norm ? CanonicalLabel(*norm) : CanonicalLabel::noncompliant();
}

}  // namespace

std::optional<std::string> normalize_decimal(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  const std::string s = strip_thousands(text.substr(b, e - b));
  if (s.empty()) return std::nullopt;

  std::size_t p = 0;
  bool negative = false;
  if (s[p] == '+' || s[p] == '-') {
    negative = s[p] == '-';
    ++p;
  }
  std::string int_part, frac_part;
  while (p < s.size() && is_digit(s[p])) int_part.push_back(s[p++]);
  if (p < s.size() && s[p] == '.') {
    ++p;
    while (p < s.size() && is_digit(s[p])) frac_part.push_back(s[p++]);
  }
  if (p != s.size() || (int_part.empty() && frac_part.empty())) return std::nullopt;

  std::size_t lead = 0;
  while (lead + 1 < int_part.size() && int_part[lead] == '0') ++lead;
  int_part = int_part.empty() ? "0" : int_part.substr(lead);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

  std::string out;
  const bool zero = int_part == "0" && frac_part.empty();
  if (negative && !zero) out.push_back('-');
  out += int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  return out;
}

CanonicalLabel canonicalize(std::string_view raw, TaskKind kind, std::size_t option_count) {
  if (kind == TaskKind::open_numeric) return last_number(raw);
  return first_index(raw, option_count);
}

}  // namespace promptsens
