#include "table_io.hpp"

#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "cli.hpp"

namespace attnflow::cli {

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string format_real(double v) { return fmt::format("{:.6g}", v); }

CsvWriter::CsvWriter(const std::filesystem::path& path, std::string_view header)
    : path_(path), out_(path), n_columns_(split(header).size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_ << header << '\n';
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != n_columns_) throw std::logic_error("csv row width mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw std::runtime_error("failed writing " + path_.string());
}

CsvTable read_csv(const std::filesystem::path& path, std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != expected_header) {
    throw ConfigError(path.string() + ": expected header '" + std::string(expected_header) + "'");
  }
  CsvTable table{split(line), {}};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw ConfigError(fmt::format("{}:{}: expected {} fields", path.string(), line_no,
                                    table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace attnflow::cli
