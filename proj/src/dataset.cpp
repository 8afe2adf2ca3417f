#include "drlrt/dataset.hpp"

#include <cmath>
#include <string>

#include "drlrt/errors.hpp"

namespace drlrt {

void Dataset::validate() const {
  const std::size_t rows = a.size();
  if (y.size() != rows) {
    throw LengthMismatch("dataset: y has " + std::to_string(y.size()) + " rows, a has " +
                         std::to_string(rows));
  }
  if (l.size() != rows * d) {
    throw LengthMismatch("dataset: confounder block has " + std::to_string(l.size()) +
                         " entries, expected " + std::to_string(rows * d));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(y[i])) {
      throw SchemaMismatch("dataset: non-finite entry in row " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (!std::isfinite(l[i])) {
      throw SchemaMismatch("dataset: non-finite confounder in row " + std::to_string(i / d));
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.d = d;
  out.a.reserve(rows.size());
  out.y.reserve(rows.size());
  out.l.reserve(rows.size() * d);
  for (std::size_t r : rows) {
    if (r >= n()) throw IndexOutOfRange("dataset subset: row " + std::to_string(r));
    out.a.push_back(a[r]);
    out.y.push_back(y[r]);
    out.l.insert(out.l.end(), l.begin() + r * d, l.begin() + (r + 1) * d);
  }
  return out;
}

}  // namespace drlrt
