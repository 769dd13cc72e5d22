#pragma once

// CSV reading and writing. Numbers are written with 17 significant digits so
// that identical doubles always produce identical bytes.

#include "cqfm/core.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cqfm {

std::string format_number(double v);

// Splits one CSV line; handles double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

// Parses a decimal real; empty or whitespace-only input gives nullopt, any
// other unparseable text gives nullopt as well (callers decide).
std::optional<double> parse_number(const std::string& cell);

// Numeric table with missing cells stored as NaN.
struct CsvTable {
  MatrixXd values;
  std::vector<std::string> row_labels;  // empty when there is no label column
  std::vector<std::string> col_names;   // empty when there is no header row

  bool has_missing() const;
};

// Panel CSV: optional header row of names, optional first column of time
// labels (detected when that column does not parse as numbers), decimal
// cells, empty cell = missing.
CsvTable read_table_csv(std::istream& in);
CsvTable read_table_csv_file(const std::string& path);

// Requires a complete table.
Panel table_to_panel(const CsvTable& table);

void write_matrix_csv(std::ostream& os, const MatrixXd& m,
                      const std::vector<std::string>& col_names = {},
                      const std::vector<std::string>& row_labels = {},
                      const std::string& label_header = "t");

void write_panel_csv(std::ostream& os, const Panel& panel);

// Sortable key for the date formats used in macro panels: YYYY-MM-DD,
// M/D/YYYY and YYYYQn. Throws ArgumentError for anything else.
long date_key(const std::string& date);

}  // namespace cqfm
