#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace attnflow::cli {

// %.6g; the same bits always print the same text.
std::string format_real(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::string_view header);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t n_columns_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Rejects files whose header line is not exactly `expected_header`.
CsvTable read_csv(const std::filesystem::path& path, std::string_view expected_header);

}  // namespace attnflow::cli
