#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tabadv::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Parses RFC-4180 text: quoted fields, doubled quotes, CRLF or LF endings.
/// A UTF-8 byte order mark on the first line is skipped.
Table parse(std::string_view text);

Table read_file(const std::filesystem::path& path);

/// Quotes a field only when it contains a delimiter, quote or line break.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Fixed-point text for human-facing tables.
std::string format_fixed(double value, int decimals);

}  // namespace tabadv::csv
