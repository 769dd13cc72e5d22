#include "cqfm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

namespace cqfm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != '\n') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  const std::string s = trim(cell);
  if (s.empty()) return std::nullopt;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool CsvTable::has_missing() const { return !values.allFinite(); }

CsvTable read_table_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw ArgumentError("CSV input is empty");

  auto numeric_or_empty = [](const std::string& c) {
    return trim(c).empty() || parse_number(c).has_value();
  };

  // Label column: some data row has a non-empty, non-numeric first cell.
  bool label_col = false;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (!numeric_or_empty(rows[r][0])) label_col = true;
  }
  // Header: the first row has a non-numeric cell outside the label column.
  bool header = false;
  for (std::size_t c = label_col ? 1 : 0; c < rows[0].size(); ++c) {
    if (!numeric_or_empty(rows[0][c])) header = true;
  }
  if (rows.size() == 1 && !numeric_or_empty(rows[0][0])) label_col = true;

  const std::size_t first_row = header ? 1 : 0;
  const std::size_t first_col = label_col ? 1 : 0;
  const std::size_t width = rows[first_row < rows.size() ? first_row : 0].size();
  if (width <= first_col) throw ArgumentError("CSV has no data columns");
  const std::size_t ncols = width - first_col;
  const std::size_t nrows = rows.size() - first_row;

  CsvTable table;
  table.values.resize(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
  for (std::size_t r = 0; r < nrows; ++r) {
    const auto& row = rows[first_row + r];
    if (row.size() != width) {
      throw ArgumentError("CSV row " + std::to_string(first_row + r + 1) + " has " +
                          std::to_string(row.size()) + " cells, expected " +
                          std::to_string(width));
    }
    if (label_col) table.row_labels.push_back(trim(row[0]));
    for (std::size_t c = 0; c < ncols; ++c) {
      const std::string& cell = row[first_col + c];
      const auto v = parse_number(cell);
      if (!v && !trim(cell).empty()) {
        throw ArgumentError("CSV cell at row " + std::to_string(first_row + r + 1) +
                            ", column " + std::to_string(first_col + c + 1) +
                            " is not a number: '" + cell + "'");
      }
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (header) {
    for (std::size_t c = 0; c < ncols; ++c) table.col_names.push_back(trim(rows[0][first_col + c]));
  }
  return table;
}

CsvTable read_table_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open input file '" + path + "'");
  return read_table_csv(in);
}

Panel table_to_panel(const CsvTable& table) {
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
      if (!std::isfinite(table.values(i, j))) {
        throw ArgumentError("panel has a missing cell at row " + std::to_string(i + 1) +
                            ", column " + std::to_string(j + 1) +
                            "; resolve missing data first (see the transform command)");
      }
    }
  }
  return Panel(table.values, table.row_labels, table.col_names);
}

void write_matrix_csv(std::ostream& os, const MatrixXd& m,
                      const std::vector<std::string>& col_names,
                      const std::vector<std::string>& row_labels,
                      const std::string& label_header) {
  const bool labels = !row_labels.empty();
  if (!col_names.empty()) {
    if (labels) os << label_header << ',';
    for (std::size_t j = 0; j < col_names.size(); ++j) os << (j ? "," : "") << col_names[j];
    os << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (labels) os << row_labels[static_cast<std::size_t>(i)] << ',';
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_number(m(i, j));
    }
    os << '\n';
  }
}

void write_panel_csv(std::ostream& os, const Panel& panel) {
  std::vector<std::string> names = panel.var_names();
  if (names.empty()) {
    for (Eigen::Index j = 0; j < panel.N(); ++j) names.push_back("x" + std::to_string(j + 1));
  }
  write_matrix_csv(os, panel.values(), names, panel.time_labels(), "date");
}

long date_key(const std::string& raw) {
  const std::string d = trim(raw);
  static const std::regex iso(R"((\d{4})-(\d{1,2})-(\d{1,2}))");
  static const std::regex us(R"((\d{1,2})/(\d{1,2})/(\d{4}))");
  static const std::regex quarter(R"((\d{4}):?[Qq]([1-4]))");
  std::smatch m;
  if (std::regex_match(d, m, iso)) {
    return std::stol(m[1]) * 10000 + std::stol(m[2]) * 100 + std::stol(m[3]);
  }
  if (std::regex_match(d, m, us)) {
    return std::stol(m[3]) * 10000 + std::stol(m[1]) * 100 + std::stol(m[2]);
  }
  if (std::regex_match(d, m, quarter)) {
    // First month of the quarter, day 1.
    return std::stol(m[1]) * 10000 + (3 * std::stol(m[2]) - 2) * 100 + 1;
  }
  throw ArgumentError("unrecognized date '" + raw +
                      "' (expected YYYY-MM-DD, M/D/YYYY or YYYYQn)");
}

}  // namespace cqfm
