#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace s2w {

// Minimal RFC-4180 CSV support: quoted fields may contain commas, quotes
// (doubled) and newlines. Rows are vectors of unescaped field strings.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::vector<std::vector<std::string>> read_csv_file(const std::string& path);

std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void write_row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace s2w
