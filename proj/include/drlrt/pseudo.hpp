#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "drlrt/dataset.hpp"
#include "drlrt/nuisance.hpp"

namespace drlrt {

/// Doubly robust pseudo-outcomes, aligned to dataset row order:
///   xi_i = (Y_i - mu-hat(A_i, L_i)) / g-hat(A_i, L_i) + mbar_i
/// where mbar_i averages mu-hat(A_i, .) over the model's reference L-sample.
struct PseudoOutcomes {
  std::vector<double> xi;
  std::vector<double> mbar;
  std::string source;
};

/// Parametric models evaluate mu and g on every (A_i, L_j) pair (O(n^2));
/// external tables are read off row-aligned. Throws NonPositiveG on a bad
/// table and EvaluationUnavailable when an external table's length does not
/// match the dataset.
PseudoOutcomes compute_pseudo_outcomes(const Dataset& data, const NuisanceModel& model,
                                       unsigned threads = 1);

/// a -> mean over reference rows of mu-hat(a, L_j). For an external model the
/// average is only known at the table's own treatment values, so it needs
/// mu_matrix and the dataset that the table is aligned to, and evaluates as a
/// step over the observed A's (each level holds from its knot to the next);
/// without mu_matrix throws EvaluationUnavailable.
std::function<double(double)> mbar_function(const NuisanceModel& model, const Dataset& data);

}  // namespace drlrt
