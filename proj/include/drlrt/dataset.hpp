#pragma once

#include <cstddef>
#include <vector>

namespace drlrt {

/// Observational sample: n rows of (confounders L, treatment A, outcome Y).
/// Confounders are stored row-major, d per row; d == 0 is allowed (no
/// adjustment variables, e.g. the raw-regression mode).
struct Dataset {
  std::size_t d = 0;
  std::vector<double> l;  // row-major, n*d
  std::vector<double> a;
  std::vector<double> y;

  std::size_t n() const { return a.size(); }
  const double* l_row(std::size_t i) const { return l.data() + i * d; }

  /// Throws LengthMismatch on inconsistent sizes, SchemaMismatch on any
  /// non-finite entry.
  void validate() const;

  /// Rows in the given order (indices must be in range; duplicates allowed).
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

}  // namespace drlrt
