#include "drlrt/sample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "drlrt/errors.hpp"

namespace drlrt {

SortedSample sort_sample(std::span<const double> a, std::span<const double> xi, double a0) {
  if (a.size() != xi.size())
    throw LengthMismatch("sort_sample: a has " + std::to_string(a.size()) + " entries, xi has " +
                         std::to_string(xi.size()));
  if (a.size() < 2) throw TooFewPoints("sort_sample: need at least 2 points");

  SortedSample out;
  out.a0 = a0;
  out.perm.resize(a.size());
  std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
  std::stable_sort(out.perm.begin(), out.perm.end(),
                   [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });

  out.a.resize(a.size());
  out.xi.resize(a.size());
  for (std::size_t p = 0; p < out.perm.size(); ++p) {
    out.a[p] = a[out.perm[p]];
    out.xi[p] = xi[out.perm[p]];
  }

  if (a0 < out.a.front())
    throw QueryBelowSupport("sort_sample: a0 = " + std::to_string(a0) +
                            " is below the smallest treatment value " +
                            std::to_string(out.a.front()));
  // Last index with a[k0] <= a0.
  const auto it = std::upper_bound(out.a.begin(), out.a.end(), a0);
  out.k0 = static_cast<std::size_t>(it - out.a.begin()) - 1;
  return out;
}

StepFunction::StepFunction(std::vector<double> knots, std::vector<double> levels)
    : knots_(std::move(knots)), levels_(std::move(levels)) {
  if (knots_.size() != levels_.size())
    throw LengthMismatch("StepFunction: knots/levels size mismatch");
  if (knots_.empty()) throw EmptyInput("StepFunction: no knots");
  if (!std::is_sorted(knots_.begin(), knots_.end()))
    throw SchemaMismatch("StepFunction: knots must be nondecreasing");
}

double StepFunction::operator()(double query) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), query);
  if (it == knots_.begin()) return levels_.front();
  return levels_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

StepFunction to_step_function(std::span<const double> values, std::span<const double> sorted_a) {
  return StepFunction(std::vector<double>(sorted_a.begin(), sorted_a.end()),
                      std::vector<double>(values.begin(), values.end()));
}

}  // namespace drlrt
