#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fairdi {

// Plain comma-separated table with a header row. No quoting; fields are trimmed.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Index of a header column; throws parse_error naming `source` when absent.
  std::size_t column(const std::string& name, const std::string& source) const;
  bool has_column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

std::vector<std::string> split_csv_line(const std::string& line);

// Strict numeric field parsers; throw parse_error citing source:line.
double parse_double_field(const std::string& field, const std::string& source, std::size_t line);
long long parse_int_field(const std::string& field, const std::string& source, std::size_t line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// 17 significant digits, which always parses back to the same double.
std::string format_double(double v);

}  // namespace fairdi
