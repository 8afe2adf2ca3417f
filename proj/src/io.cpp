#include "drlrt/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "drlrt/errors.hpp"

namespace drlrt {

namespace {

// Strips a trailing carriage return so CRLF files parse.
void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_cell(const std::string& field, const std::string& origin, std::size_t line_no,
                  std::size_t col) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(value)) {
    throw SchemaMismatch(origin + ":" + std::to_string(line_no) + ": cell '" + field +
                         "' in column " + std::to_string(col + 1) + " is not a finite number");
  }
  return value;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaMismatch("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable read_csv(std::istream& in, const std::string& origin) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch(origin + ": empty file, header expected");
  chomp(line);
  table.header = split_fields(line);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c].empty()) {
      throw SchemaMismatch(origin + ": empty header name in column " + std::to_string(c + 1));
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != table.header.size()) {
      throw SchemaMismatch(origin + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(table.header.size()) + " fields, got " +
                           std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      table.cells.push_back(parse_cell(fields[c], origin, line_no, c));
    }
    ++table.rows;
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch(path + ": cannot open");
  return read_csv(in, path);
}

std::string format_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw SchemaMismatch("number formatting failed");
  return std::string(buf, ptr);
}

void write_csv_row(std::ostream& out, const std::vector<double>& row) {
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (c != 0) out << ',';
    out << format_double(row[c]);
  }
  out << '\n';
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch(path + ": cannot open");
  Matrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (m.rows == 0) {
      m.cols = fields.size();
    } else if (fields.size() != m.cols) {
      throw SchemaMismatch(path + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(m.cols) + " fields, got " +
                           std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      m.cells.push_back(parse_cell(fields[c], path, line_no, c));
    }
    ++m.rows;
  }
  if (m.rows == 0) throw SchemaMismatch(path + ": empty matrix");
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw SchemaMismatch(path + ": cannot open for writing");
  std::vector<double> row(m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) row[c] = m.cells[r * m.cols + c];
    write_csv_row(out, row);
  }
  if (!out.good()) throw SchemaMismatch(path + ": write failed");
}

Dataset read_dataset_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const std::size_t y_col = table.column("y");
  const std::size_t a_col = table.column("a");

  // Confounder columns must be l1..ld with consecutive numbering.
  std::size_t d = 0;
  while (table.has_column("l" + std::to_string(d + 1))) ++d;
  if (table.header.size() != 2 + d) {
    for (const std::string& name : table.header) {
      if (name == "y" || name == "a") continue;
      bool expected = false;
      for (std::size_t j = 1; j <= d; ++j) {
        if (name == "l" + std::to_string(j)) { expected = true; break; }
      }
      if (!expected) throw SchemaMismatch(path + ": unexpected column '" + name + "'");
    }
    throw SchemaMismatch(path + ": duplicate column in header");
  }

  Dataset data;
  data.d = d;
  std::vector<std::size_t> l_cols(d);
  for (std::size_t j = 0; j < d; ++j) l_cols[j] = table.column("l" + std::to_string(j + 1));
  data.y.reserve(table.rows);
  data.a.reserve(table.rows);
  data.l.reserve(table.rows * d);
  for (std::size_t r = 0; r < table.rows; ++r) {
    data.y.push_back(table.at(r, y_col));
    data.a.push_back(table.at(r, a_col));
    for (std::size_t j = 0; j < d; ++j) data.l.push_back(table.at(r, l_cols[j]));
  }
  data.validate();
  return data;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "y,a";
  for (std::size_t j = 1; j <= data.d; ++j) out << ",l" << j;
  out << '\n';
  std::vector<double> row(2 + data.d);
  for (std::size_t i = 0; i < data.n(); ++i) {
    row[0] = data.y[i];
    row[1] = data.a[i];
    for (std::size_t j = 0; j < data.d; ++j) row[2 + j] = data.l_row(i)[j];
    write_csv_row(out, row);
  }
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw SchemaMismatch(path + ": cannot open for writing");
  write_dataset_csv(out, data);
  if (!out.good()) throw SchemaMismatch(path + ": write failed");
}

}  // namespace drlrt
