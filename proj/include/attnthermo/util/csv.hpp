#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace thermo::util {

// Versioned CSV files. The first line is "# schema: <name>-v<N>", the second
// the header row; readers refuse any schema mismatch rather than silently
// reinterpreting columns. Doubles are written with %.17g so a rerun under the
// same build is byte-identical and values round-trip exactly.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& schema,
            const std::vector<std::string>& columns);

  void write_row(std::span<const double> values);
  void write_row(const std::vector<std::string>& fields);
  void flush() { out_.flush(); }

  static std::string format_double(double v);

 private:
  std::ofstream out_;
  std::size_t n_columns_;
};

struct CsvFile {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  double number(std::size_t row, const std::string& column) const;
  std::size_t column_index(const std::string& column) const;
};

// Throws on missing file, malformed content, or when expected_schema is
// nonempty and does not match the file's schema line.
CsvFile read_csv(const std::filesystem::path& path,
                 const std::string& expected_schema);

}  // namespace thermo::util
