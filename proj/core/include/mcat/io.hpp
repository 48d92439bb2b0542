#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mcat {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Whole file as bytes. Throws IoError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Comma-separated table with a single header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& add_row(std::vector<std::string> cells);
  std::string str() const;
  std::size_t rows() const noexcept { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parsed CSV: header plus string cells. Throws FormatError on ragged rows.
struct CsvDocument {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

CsvDocument parse_csv(std::string_view text, bool has_header = true);

}  // namespace mcat
