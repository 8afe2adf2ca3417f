#include "drlrt/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "drlrt/errors.hpp"
#include "drlrt/pseudo.hpp"
#include "drlrt/rng.hpp"

namespace drlrt {

namespace {

constexpr std::uint64_t kFoldStream = 0x666f6c64;  // "fold"

void check_fold_options(const CrossfitOptions& opt, std::size_t k_have) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw SchemaMismatch("alpha must lie in (0, 1)");
  if (!(opt.beta_bound > 0.0)) throw SchemaMismatch("beta_bound must be positive");
  if (k_have < 2) throw TooFewSamples("cross-fit evaluation needs at least 2 folds");
}

struct FoldPieces {
  std::vector<PreparedSample> preps;
  std::vector<VarianceEstimate> vars;
  double kappa_bar = 0.0;
  std::size_t n_total = 0;
};

/// Per-fold sort/fit/variance with fold-indexed error context.
FoldPieces prepare_folds(const std::vector<FoldData>& folds_data, double a0,
                         const CrossfitOptions& opt) {
  FoldPieces pieces;
  pieces.preps.reserve(folds_data.size());
  pieces.vars.reserve(folds_data.size());
  double kappa_sum = 0.0;
  for (std::size_t k = 0; k < folds_data.size(); ++k) {
    const FoldData& fold = folds_data[k];
    std::vector<double> xi = fold.xi;
    if (opt.direction == Direction::decreasing) {
      for (double& v : xi) v = -v;
    }
    try {
      pieces.preps.push_back(prepare_sample(fold.eval.a, xi, a0));
    } catch (const QueryBelowSupport& e) {
      throw FoldQueryBelowSupport("fold " + std::to_string(k + 1) + ": " + e.what());
    }
    pieces.vars.push_back(variance_at(pieces.preps.back(), a0, opt.variance, opt.bandwidth));
    kappa_sum += pieces.vars.back().kappa_hat;
    pieces.n_total += fold.eval.n();
  }
  pieces.kappa_bar = kappa_sum / static_cast<double>(folds_data.size());
  return pieces;
}

}  // namespace

std::vector<std::size_t> FoldAssignment::rows_in(std::size_t k) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == k) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldAssignment::rows_not_in(std::size_t k) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != k) rows.push_back(i);
  }
  return rows;
}

FoldAssignment assign_folds(std::size_t n, std::size_t K, std::uint64_t seed) {
  if (K < 2 || n < 2 * K) {
    throw TooFewSamples("fold assignment needs K >= 2 and n >= 2K (got n = " +
                        std::to_string(n) + ", K = " + std::to_string(K) + ")");
  }
  std::vector<std::size_t> shuffled(n);
  std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
  StreamRng rng(seed, kFoldStream);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(shuffled[i], shuffled[j]);
  }
  FoldAssignment folds;
  folds.K = K;
  folds.seed = seed;
  folds.fold_of.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) folds.fold_of[shuffled[p]] = p % K + 1;
  return folds;
}

std::vector<FoldData> crossfit_pseudo(const Dataset& data, const NuisanceSpec& spec,
                                      const FoldAssignment& folds, unsigned threads) {
  if (folds.fold_of.size() != data.n()) {
    throw LengthMismatch("fold assignment covers " + std::to_string(folds.fold_of.size()) +
                         " rows, dataset has " + std::to_string(data.n()));
  }
  std::vector<FoldData> out;
  out.reserve(folds.K);
  for (std::size_t k = 1; k <= folds.K; ++k) {
    Dataset train = data.subset(folds.rows_not_in(k));
    Dataset eval = data.subset(folds.rows_in(k));
    NuisanceModel model{fit_nuisance(train, spec, eval)};
    PseudoOutcomes pseudo = compute_pseudo_outcomes(eval, model, threads);
    out.push_back(FoldData{std::move(eval), std::move(pseudo.xi)});
  }
  return out;
}

CrossfitResult crossfit_eval(const std::vector<FoldData>& folds_data, double a0, double t0,
                             const CrossfitOptions& opt, QuantileSource& quantiles) {
  check_fold_options(opt, folds_data.size());
  const std::size_t K = folds_data.size();
  const double t0_int = opt.direction == Direction::decreasing ? -t0 : t0;
  FoldPieces pieces = prepare_folds(folds_data, a0, opt);

  CrossfitResult r;
  r.a0 = a0;
  r.t0 = t0;
  r.alpha = opt.alpha;
  r.beta_bound = opt.beta_bound;
  r.K = K;
  r.n = pieces.n_total;
  r.per_fold.reserve(K);
  double s_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const StatisticValue stat = statistic_at(pieces.preps[k], t0_int);
    s_sum += stat.s_n;
    const bool flip = opt.direction == Direction::decreasing;
    FoldStats fs;
    fs.s_n = stat.s_n;
    fs.kappa_hat = pieces.vars[k].kappa_hat;
    fs.lambda_hat = flip ? -stat.lambda_hat : stat.lambda_hat;
    fs.theta_hat_a0 = flip ? -pieces.preps[k].theta_hat_a0 : pieces.preps[k].theta_hat_a0;
    fs.n_k = folds_data[k].eval.n();
    fs.bandwidth = pieces.vars[k].bandwidth;
    r.per_fold.push_back(fs);
  }
  r.s_bar = s_sum / static_cast<double>(K);
  r.kappa_bar = pieces.kappa_bar;
  r.q_crit = quantiles.critical_value(1.0 - opt.alpha, opt.beta_bound, K);
  r.reject = r.s_bar > r.kappa_bar * r.q_crit;
  return r;
}

CiResult crossfit_ci_eval(const std::vector<FoldData>& folds_data, double a0,
                          const CrossfitOptions& opt, QuantileSource& quantiles) {
  check_fold_options(opt, folds_data.size());
  const std::size_t K = folds_data.size();
  FoldPieces pieces = prepare_folds(folds_data, a0, opt);
  const double q = quantiles.critical_value(1.0 - opt.alpha, opt.beta_bound, K);

  double center = 0.0;
  for (const PreparedSample& prep : pieces.preps) center += prep.theta_hat_a0;
  center /= static_cast<double>(K);
  double spread = 0.0;
  double xi_min = pieces.preps.front().sorted.xi.front();
  double xi_max = xi_min;
  for (const PreparedSample& prep : pieces.preps) {
    spread = std::max(spread, std::abs(prep.theta_hat_a0 - center));
    const auto [lo, hi] = std::minmax_element(prep.sorted.xi.begin(), prep.sorted.xi.end());
    xi_min = std::min(xi_min, *lo);
    xi_max = std::max(xi_max, *hi);
  }
  const double rate = std::pow(static_cast<double>(pieces.n_total),
                               -opt.beta_bound / (2.0 * opt.beta_bound + 1.0));

  InversionProblem prob;
  prob.statistic = [&pieces, K](double t0) {
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += statistic_at(pieces.preps[k], t0).s_n;
    return acc / static_cast<double>(K);
  };
  prob.center = center;
  prob.half_width =
      std::max(4.0 * std::sqrt(pieces.kappa_bar) * rate, (xi_max - xi_min) / 4.0) + spread;
  prob.threshold = pieces.kappa_bar * q;
  prob.grid_points = opt.grid_points;
  prob.max_doublings = opt.max_doublings;
  prob.refine_tol = opt.refine_tol;
  prob.threads = opt.threads;
  const InversionOutcome out = invert_statistic(prob);

  CiResult r;
  r.a0 = a0;
  r.alpha = opt.alpha;
  r.grid_points_scanned = out.scanned;
  r.refined = out.refined;
  r.empty = out.empty;
  if (opt.direction == Direction::decreasing) {
    r.theta_hat_a0 = -center;
    r.lower = -out.upper;
    r.upper = -out.lower;
    r.lower_unbounded = out.upper_unbounded;
    r.upper_unbounded = out.lower_unbounded;
  } else {
    r.theta_hat_a0 = center;
    r.lower = out.lower;
    r.upper = out.upper;
    r.lower_unbounded = out.lower_unbounded;
    r.upper_unbounded = out.upper_unbounded;
  }
  return r;
}

CrossfitResult crossfit_test(const Dataset& data, const NuisanceSpec& spec, double a0,
                             double t0, const CrossfitOptions& opt, QuantileSource& quantiles) {
  const FoldAssignment folds = assign_folds(data.n(), opt.K, opt.fold_seed);
  const std::vector<FoldData> folds_data = crossfit_pseudo(data, spec, folds, opt.threads);
  return crossfit_eval(folds_data, a0, t0, opt, quantiles);
}

CiResult crossfit_ci(const Dataset& data, const NuisanceSpec& spec, double a0,
                     const CrossfitOptions& opt, QuantileSource& quantiles) {
  const FoldAssignment folds = assign_folds(data.n(), opt.K, opt.fold_seed);
  const std::vector<FoldData> folds_data = crossfit_pseudo(data, spec, folds, opt.threads);
  return crossfit_ci_eval(folds_data, a0, opt, quantiles);
}

}  // namespace drlrt
