#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"

namespace sadprune::csv {

using row = std::vector<std::string>;

/// Reads one RFC 4180 record (quoted fields may contain commas, doubled quotes and newlines).
/// Returns false at end of input.
inline bool read_row(std::istream& is, row& out, std::size_t& line) {
  out.clear();
  if (is.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false, was_quoted = false;
  const std::size_t start_line = ++line;
  for (;;) {
    const int ch = is.get();
    if (ch == std::char_traits<char>::eof()) {
      if (quoted) throw ingestion_error("line " + std::to_string(start_line) + ": unterminated quoted field");
      out.push_back(std::move(field));
      return true;
    }
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get();
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && is.peek() == '\n') is.get();
      out.push_back(std::move(field));
      return true;
    } else {
      field += c;
    }
  }
}

inline std::vector<row> read_all(std::istream& is) {
  std::vector<row> rows;
  row r;
  std::size_t line = 0;
  while (read_row(is, r, line)) {
    if (r.size() == 1 && r[0].empty()) continue;  // blank line
    rows.push_back(r);
  }
  return rows;
}

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_row(std::ostream& os, const row& r) {
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i) os << ',';
    os << quote(r[i]);
  }
  os << '\n';
}

}  // namespace sadprune::csv
