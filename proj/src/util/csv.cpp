#include "attnthermo/util/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace thermo::util {

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::string& schema,
                     const std::vector<std::string>& columns)
    : out_(path, std::ios::trunc), n_columns_(columns.size()) {
  if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path.string());
  if (columns.empty()) throw std::invalid_argument("CsvWriter: no columns");
  out_ << "# schema: " << schema << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ",";
    out_ << columns[i];
  }
  out_ << "\n";
}

std::string CsvWriter::format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void CsvWriter::write_row(std::span<const double> values) {
  if (values.size() != n_columns_)
    throw std::invalid_argument("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ",";
    out_ << format_double(values[i]);
  }
  out_ << "\n";
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (fields.size() != n_columns_)
    throw std::invalid_argument("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ",";
    out_ << fields[i];
  }
  out_ << "\n";
}

std::size_t CsvFile::column_index(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == column) return i;
  throw std::out_of_range("CsvFile: no column " + column);
}

double CsvFile::number(std::size_t row, const std::string& column) const {
  const auto& cell = rows.at(row).at(column_index(column));
  if (cell.empty()) throw std::runtime_error("CsvFile: empty numeric cell");
  return std::stod(cell);
}

CsvFile read_csv(const std::filesystem::path& path,
                 const std::string& expected_schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  CsvFile file;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# schema: ", 0) != 0)
    throw std::runtime_error("read_csv: missing schema line in " +
                             path.string());
  file.schema = line.substr(10);
  if (!expected_schema.empty() && file.schema != expected_schema)
    throw std::runtime_error("read_csv: schema mismatch in " + path.string() +
                             ": found '" + file.schema + "', expected '" +
                             expected_schema + "'");
  if (!std::getline(in, line))
    throw std::runtime_error("read_csv: missing header in " + path.string());
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) file.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream rs(line);
    std::string field;
    // Trailing empty field is significant (e.g. blank timestamp).
    std::size_t count = 1;
    for (char c : line)
      if (c == ',') ++count;
    while (std::getline(rs, field, ',')) row.push_back(field);
    while (row.size() < count) row.emplace_back();
    if (row.size() != file.columns.size())
      throw std::runtime_error("read_csv: ragged row in " + path.string());
    file.rows.push_back(std::move(row));
  }
  return file;
}

}  // namespace thermo::util
