#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mailtarget/errors.hpp"

namespace mailtarget::csv {

// Records are line-delimited. Fields containing commas or quotes are
// double-quoted with embedded quotes doubled; a quoted field may not span lines.
struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// Returns nullopt when quoting is malformed.
inline std::optional<std::vector<std::string>> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  std::size_t i = 0;
  while (true) {
    field.clear();
    if (i < line.size() && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            ++i;
            closed = true;
            break;
          }
        } else {
          field.push_back(line[i++]);
        }
      }
      if (!closed) return std::nullopt;
      if (i < line.size() && line[i] != ',') return std::nullopt;
    } else {
      while (i < line.size() && line[i] != ',') {
        if (line[i] == '"') return std::nullopt;
        field.push_back(line[i++]);
      }
    }
    fields.push_back(field);
    if (i >= line.size()) break;
    ++i;  // comma
  }
  return fields;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

// Reads all records after validating the header. Blank lines are skipped.
// Every record must have exactly as many fields as the header.
inline std::vector<Record> read(std::istream& in, const std::string& source,
                                const std::vector<std::string>& header) {
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!seen_header) {
      auto fields = split_line(line);
      if (!fields || *fields != header) {
        std::string expected;
        for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
        throw DataError(source, line_no, "expected header '" + expected + "'");
      }
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (!fields) throw DataError(source, line_no, "malformed quoting");
    if (fields->size() != header.size()) {
      throw DataError(source, line_no,
                      "expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(fields->size()));
    }
    records.push_back({line_no, std::move(*fields)});
  }
  if (!seen_header) throw DataError(source, 1, "missing header");
  return records;
}

inline std::vector<Record> read_file(const std::string& path,
                                     const std::vector<std::string>& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read(in, path, header);
}

}  // namespace mailtarget::csv
