#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "drlrt/dataset.hpp"
#include "drlrt/limit_dist.hpp"
#include "drlrt/lrt.hpp"
#include "drlrt/nuisance.hpp"

namespace drlrt {

/// K-fold partition of row indices. fold_of[i] is 1-based so a value of 0
/// always means "unassigned" in downstream bookkeeping.
struct FoldAssignment {
  std::size_t K = 0;
  std::vector<std::size_t> fold_of;
  std::uint64_t seed = 0;

  std::vector<std::size_t> rows_in(std::size_t k) const;
  std::vector<std::size_t> rows_not_in(std::size_t k) const;
};

/// Uniform random partition into K folds of size n/K rounded either way:
/// a seeded shuffle dealt round-robin. Throws TooFewSamples unless K >= 2
/// and n >= 2K (every training split must keep at least K rows).
FoldAssignment assign_folds(std::size_t n, std::size_t K, std::uint64_t seed);

/// One evaluation fold's slice of the sample: its rows and their
/// pseudo-outcomes from the model trained on the complementary folds.
/// xi is stored unoriented; direction handling happens at evaluation time.
struct FoldData {
  Dataset eval;
  std::vector<double> xi;
};

/// Fits the nuisance on each complement and evaluates pseudo-outcomes on the
/// held-out fold, in fold order. The marginal density and m-bar average are
/// rebuilt on each evaluation fold's own confounder sample. A fold whose
/// treatment support misses a later query surfaces as FoldQueryBelowSupport
/// from the evaluation calls, not from here.
std::vector<FoldData> crossfit_pseudo(const Dataset& data, const NuisanceSpec& spec,
                                      const FoldAssignment& folds, unsigned threads = 1);

struct FoldStats {
  double s_n = 0.0;
  double kappa_hat = 0.0;
  double lambda_hat = 0.0;
  double theta_hat_a0 = 0.0;
  std::size_t n_k = 0;
  double bandwidth = 0.0;
};

struct CrossfitOptions {
  double alpha = 0.10;
  double beta_bound = 5.0;
  std::size_t K = 2;
  std::uint64_t fold_seed = 0;
  Direction direction = Direction::increasing;
  VarianceMode variance = VarianceMode::kernel;
  std::optional<double> bandwidth;  // shared across folds when given
  unsigned threads = 1;
  std::size_t grid_points = 201;
  unsigned max_doublings = 8;
  double refine_tol = 1e-4;
};

struct CrossfitResult {
  double a0 = 0.0;
  double t0 = 0.0;
  double alpha = 0.0;
  double beta_bound = 0.0;
  double s_bar = 0.0;      // fold average of the per-fold statistics
  double kappa_bar = 0.0;  // fold average of the per-fold variance estimates
  double q_crit = 0.0;     // quantile of the K-fold averaged reference law
  bool reject = false;
  std::size_t K = 0;
  std::size_t n = 0;
  std::vector<FoldStats> per_fold;  // fold index order, results in caller units
};

/// Evaluates the fold-averaged test on precomputed fold slices. The quantile
/// source must be able to serve the K-fold reference (simulate policy).
CrossfitResult crossfit_eval(const std::vector<FoldData>& folds_data, double a0, double t0,
                             const CrossfitOptions& opt, QuantileSource& quantiles);

/// CI by inverting the fold-averaged statistic. The averaged statistic can
/// reject every candidate; that surfaces as empty=true with NaN endpoints.
CiResult crossfit_ci_eval(const std::vector<FoldData>& folds_data, double a0,
                          const CrossfitOptions& opt, QuantileSource& quantiles);

/// Convenience composition: assign folds, cross-fit the nuisance, evaluate.
CrossfitResult crossfit_test(const Dataset& data, const NuisanceSpec& spec, double a0,
                             double t0, const CrossfitOptions& opt, QuantileSource& quantiles);

CiResult crossfit_ci(const Dataset& data, const NuisanceSpec& spec, double a0,
                     const CrossfitOptions& opt, QuantileSource& quantiles);

}  // namespace drlrt
