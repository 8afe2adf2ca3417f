#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "drlrt/dataset.hpp"

namespace drlrt {

/// Numeric CSV with a mandatory header row. Parsing is strict: every cell
/// must be a finite number (period decimal separator, no locale), rows must
/// be rectangular, and there is no NA handling.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<double> cells;  // row-major
  std::size_t rows = 0;

  std::size_t cols() const { return header.size(); }
  double at(std::size_t r, std::size_t c) const { return cells[r * header.size() + c]; }

  /// Index of a named column; throws SchemaMismatch naming the column.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

/// Throws SchemaMismatch on any structural or numeric parse failure; the
/// message carries the file, line, and offending cell.
CsvTable read_csv(const std::string& path);
CsvTable read_csv(std::istream& in, const std::string& origin);

/// Shortest decimal form that round-trips the exact double.
std::string format_double(double x);

void write_csv_row(std::ostream& out, const std::vector<double>& row);

/// Headerless rectangular numeric CSV (used for the nuisance mu matrix).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> cells;  // row-major
};

Matrix read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Matrix& m);

/// Expects columns y, a and consecutively numbered l1..ld (d >= 0 inferred);
/// column order is free, extras are rejected.
Dataset read_dataset_csv(const std::string& path);

void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv(const std::string& path, const Dataset& data);

}  // namespace drlrt
