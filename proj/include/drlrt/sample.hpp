#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drlrt {

/// A sample (a_i, xi_i) sorted by treatment value, with the constraint index
/// resolved against a query point a0.
///
/// k0 is the largest index with a[k0] <= a0 (ties sort stably, so among equal
/// treatment values k0 is the last one). Constraints are enforced at the order
/// statistic a[k0], not at a0 itself.
struct SortedSample {
  std::vector<double> a;            // nondecreasing
  std::vector<double> xi;           // aligned with a
  std::vector<std::size_t> perm;    // sorted position -> original row
  double a0 = 0.0;
  std::size_t k0 = 0;
};

/// Sorts (a, xi) by a (stable in the original order) and resolves k0.
/// Throws LengthMismatch, TooFewPoints (n < 2), QueryBelowSupport (a0 < min a).
SortedSample sort_sample(std::span<const double> a, std::span<const double> xi, double a0);

/// Piecewise-constant function: value at the largest knot <= query; queries
/// below the first knot return the first level. Knots must be nondecreasing
/// (duplicates allowed; the last duplicate wins).
class StepFunction {
public:
  StepFunction(std::vector<double> knots, std::vector<double> levels);

  double operator()(double query) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& levels() const { return levels_; }

private:
  std::vector<double> knots_;
  std::vector<double> levels_;
};

/// Wraps fitted values over sorted treatment points as a step function.
StepFunction to_step_function(std::span<const double> values, std::span<const double> sorted_a);

}  // namespace drlrt
