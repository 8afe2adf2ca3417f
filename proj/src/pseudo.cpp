#include "drlrt/pseudo.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

#include "drlrt/errors.hpp"
#include "drlrt/parallel.hpp"
#include "drlrt/sample.hpp"

namespace drlrt {

PseudoOutcomes compute_pseudo_outcomes(const Dataset& data, const NuisanceModel& model,
                                       unsigned threads) {
  data.validate();
  const std::size_t n = data.n();
  PseudoOutcomes out;
  out.source = model.source();
  out.xi.resize(n);
  out.mbar.resize(n);

  if (model.is_external()) {
    const ExternalNuisance& ext = model.external();
    ext.validate();
    if (ext.n() != n) {
      throw EvaluationUnavailable("external nuisance has " + std::to_string(ext.n()) +
                                  " rows, dataset has " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      out.mbar[i] = ext.mbar[i];
      out.xi[i] = (data.y[i] - ext.mu_ii[i]) / ext.g_ii[i] + ext.mbar[i];
    }
    return out;
  }

  const ParametricNuisance& nuis = model.parametric();
  const std::size_t ref = nuis.reference_rows();
  if (ref == 0) throw EmptyInput("pseudo-outcomes: empty reference sample");
  if (!(nuis.truncation_floor > 0.0)) {
    throw NonPositiveG("pseudo-outcomes: truncation floor must be positive");
  }

  // The propensity's conditional means over the reference rows do not depend
  // on the query row; hoisting them drops a factor of the design dimension
  // from the O(n^2) loop.
  std::vector<double> ref_mean(ref);
  for (std::size_t j = 0; j < ref; ++j) {
    ref_mean[j] = nuis.propensity.mean(nuis.reference_row(j));
  }

  parallel_for(n, threads, [&](std::size_t i) {
    const double ai = data.a[i];
    double f_acc = 0.0;
    double m_acc = 0.0;
    for (std::size_t j = 0; j < ref; ++j) {
      f_acc += std::max(nuis.propensity.pi_from_mean(ai, ref_mean[j]), nuis.truncation_floor);
      m_acc += nuis.outcome.mu(ai, nuis.reference_row(j));
    }
    const double f_hat = f_acc / static_cast<double>(ref);
    const double g_ii = nuis.pi_truncated(ai, data.l_row(i)) / f_hat;
    const double mu_ii = nuis.outcome.mu(ai, data.l_row(i));
    out.mbar[i] = m_acc / static_cast<double>(ref);
    out.xi[i] = (data.y[i] - mu_ii) / g_ii + out.mbar[i];
  });
  return out;
}

std::function<double(double)> mbar_function(const NuisanceModel& model, const Dataset& data) {
  data.validate();

  if (model.is_external()) {
    const ExternalNuisance& ext = model.external();
    ext.validate();
    if (!ext.mu_matrix) {
      throw EvaluationUnavailable("m-bar for an external nuisance needs the mu matrix");
    }
    const std::size_t n = ext.n();
    if (n != data.n()) {
      throw EvaluationUnavailable("external nuisance has " + std::to_string(n) +
                                  " rows, dataset has " + std::to_string(data.n()));
    }
    std::vector<double> row_mean(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = ext.mu_matrix->data() + i * n;
      row_mean[i] = std::accumulate(row, row + n, 0.0) / static_cast<double>(n);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return data.a[x] < data.a[y]; });
    std::vector<double> knots(n);
    std::vector<double> levels(n);
    for (std::size_t r = 0; r < n; ++r) {
      knots[r] = data.a[order[r]];
      levels[r] = row_mean[order[r]];
    }
    auto step = std::make_shared<StepFunction>(std::move(knots), std::move(levels));
    return [step](double a) { return (*step)(a); };
  }

  auto nuis = std::make_shared<ParametricNuisance>(model.parametric());
  if (nuis->reference_rows() == 0) throw EmptyInput("m-bar: empty reference sample");
  return [nuis](double a) {
    const std::size_t ref = nuis->reference_rows();
    double acc = 0.0;
    for (std::size_t j = 0; j < ref; ++j) acc += nuis->outcome.mu(a, nuis->reference_row(j));
    return acc / static_cast<double>(ref);
  };
}

}  // namespace drlrt
