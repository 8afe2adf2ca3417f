#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drlrt {

/// Constancy block of an isotonic fit; half-open index range [begin, end).
struct IsotonicBlock {
  std::size_t begin = 0;
  std::size_t end = 0;
  double level = 0.0;
};

/// Monotone (nondecreasing) least-squares fit with unit weights.
struct IsotonicFit {
  std::vector<double> values;         // fitted value per index
  std::vector<IsotonicBlock> blocks;  // levels strictly increasing across blocks
  double sse = 0.0;                   // sum of squared residuals
};

/// Pool-adjacent-violators fit of xi. Equivalent to the left derivative of the
/// greatest convex minorant of the cumulative-sum diagram, and to the max-min
/// formula values[i] = max_{k<=i} min_{j>=i} mean(xi[k..j]). Throws EmptyInput.
IsotonicFit pava(std::span<const double> xi);

/// Fitted value at index k0 of the isotonic fit of xi with `shift` added to
/// xi[k0] only. Every pooling window at k0 contains k0 exactly once, so this
/// equals max_{k<=k0} min_{i>=k0} (shift + sum(xi[k..i])) / (i - k + 1); as a
/// function of shift it is continuous and strictly increasing.
double maxmin_at(std::span<const double> xi, std::size_t k0, double shift);

/// Solves maxmin_at(xi, k0, n * lambda) = t0 for the Lagrange multiplier lambda
/// by bracketed bisection. The initial bracket half-width |t0| + max|xi| already
/// straddles the root for finite input; it is doubled defensively and
/// BracketFailure is thrown after 200 doublings (non-finite input).
double solve_lambda(std::span<const double> xi, std::size_t k0, double t0);

/// Monotone least-squares fit subject to values[k0] == t0.
struct ConstrainedFit {
  std::vector<double> values;
  std::vector<IsotonicBlock> blocks;
  double lambda_hat = 0.0;  // multiplier; 0 when the constraint is inactive
  double t0 = 0.0;
  std::size_t k0 = 0;
  bool active = false;  // true when the unconstrained fit violated the constraint
  double sse = 0.0;
};

/// Computes the constrained fit: if the unconstrained fit already meets the
/// constraint (relative tolerance 1e-12) it is returned unchanged with lambda
/// 0; otherwise the multiplier is solved and the fit is the unconstrained fit
/// of xi with n*lambda added at k0, with the block containing k0 then clamped
/// to t0 exactly (removes the bisection residue, so values[k0] == t0 bitwise
/// on the active path). The result stays monotone and feasible, which keeps
/// the likelihood-ratio statistic nonnegative by construction.
ConstrainedFit constrained_fit(std::span<const double> xi, std::size_t k0, double t0);

}  // namespace drlrt
