#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drlrt/dataset.hpp"
#include "drlrt/isotonic.hpp"
#include "drlrt/limit_dist.hpp"
#include "drlrt/nuisance.hpp"
#include "drlrt/sample.hpp"

namespace drlrt {

/// Orientation of the monotonicity constraint. The machinery is written for a
/// nondecreasing target; `decreasing` negates the pseudo-outcomes and t0 going
/// in and maps the results back (lambda negated, CI endpoints swapped and
/// negated).
enum class Direction { increasing, decreasing };

/// Variance at a0: `kernel` smooths the squared isotonic residuals toward a0;
/// `rice` is the first-difference estimator for homoscedastic regression and
/// belongs with the plain monotone-regression (identity-nuisance) mode.
enum class VarianceMode { kernel, rice };

/// Result label only: `noncausal` marks a run whose nuisance is the identity,
/// i.e. plain monotone regression of Y on A.
enum class AnalysisMode { causal, noncausal };

/// 1.06 * sd(a) * n^(-1/5) with the sample (n-1) standard deviation.
/// Throws TooFewPoints for n < 2.
double silverman_bandwidth(std::span<const double> a);

/// First-difference variance estimator on responses ordered by treatment:
/// sum of squared adjacent differences / (2(n-1)). Unbiased for the noise
/// variance under a smooth signal. Throws TooFewPoints for n < 2.
double noncausal_sigma2(std::span<const double> y_sorted);

struct VarianceEstimate {
  double kappa_hat = 0.0;
  double bandwidth = 0.0;    // 0 in rice mode (no smoothing involved)
  double n_effective = 0.0;  // Gaussian kernel weight mass at a0; n in rice mode
};

/// Nadaraya-Watson estimate of E(eta_sq | A = a0) with a Gaussian kernel and
/// the given (default Silverman) bandwidth. Weights are summed in index order.
/// The estimate is floored at 1e-12 with a stderr warning; EmptyKernelMass
/// when every weight underflows (a0 far outside the treatment support) or the
/// bandwidth is not positive.
VarianceEstimate kernel_kappa(std::span<const double> a, std::span<const double> eta_sq,
                              double a0, std::optional<double> bandwidth = std::nullopt);

/// Likelihood-ratio statistic of the constancy constraint: the direct form
/// sum (xi - constrained)^2 - sum (xi - full)^2, accumulated per index. Also
/// accumulates the fitted-value identity sum (full - t0)^2 - (constrained -
/// t0)^2 and throws IdentityViolation if the two disagree beyond
/// 1e-8 * (1 + |s_n|), which would signal a broken fit. Returns the direct
/// form clamped to be nonnegative.
double lrt_statistic(std::span<const double> xi, const IsotonicFit& full,
                     const ConstrainedFit& constrained, double t0);

/// The t0-independent part of a test: sorted sample, unconstrained fit, and
/// the fitted curve as a function of the treatment.
struct PreparedSample {
  SortedSample sorted;
  IsotonicFit full;
  StepFunction theta_hat;
  double theta_hat_a0 = 0.0;
};

/// Sorts, fits, and resolves the constraint index. Throws LengthMismatch,
/// TooFewPoints, QueryBelowSupport (a0 below the treatment support).
PreparedSample prepare_sample(std::span<const double> a, std::span<const double> xi, double a0);

struct StatisticValue {
  double s_n = 0.0;
  double lambda_hat = 0.0;
  bool active = false;  // unconstrained fit violated the constraint
};

/// Constrained fit and statistic at one null value. Pure; safe to call
/// concurrently on a shared PreparedSample.
StatisticValue statistic_at(const PreparedSample& prep, double t0);

/// Variance estimate at a0 from the prepared sample: kernel mode smooths
/// (xi_i - theta_hat(a_i))^2, rice mode differences the sorted responses.
VarianceEstimate variance_at(const PreparedSample& prep, double a0, VarianceMode mode,
                             std::optional<double> bandwidth = std::nullopt);

struct TestOptions {
  double alpha = 0.10;
  double beta_bound = 5.0;
  Direction direction = Direction::increasing;
  VarianceMode variance = VarianceMode::kernel;
  AnalysisMode mode = AnalysisMode::causal;
  std::optional<double> bandwidth;
  bool with_p_value = false;  // only filled when the quantile source simulates
  unsigned threads = 1;
};

struct LrtResult {
  double a0 = 0.0;
  double t0 = 0.0;
  double alpha = 0.0;
  double beta_bound = 0.0;
  double s_n = 0.0;
  double kappa_hat = 0.0;
  double q_crit = 0.0;
  bool reject = false;
  double lambda_hat = 0.0;
  AnalysisMode mode = AnalysisMode::causal;
  std::size_t n = 0;
  std::optional<double> bandwidth;  // kernel variance only
  std::optional<double> p_value;    // MC tail frequency of the reference at s_n/kappa
  std::optional<double> p_value_se;
};

/// Full test pipeline: pseudo-outcomes, orientation, sort, fits, statistic,
/// variance, critical value. reject iff s_n > kappa_hat * q_crit.
LrtResult run_test(const Dataset& data, const NuisanceModel& model, double a0, double t0,
                   const TestOptions& opt, QuantileSource& quantiles);

struct CiOptions {
  double alpha = 0.10;
  double beta_bound = 5.0;
  Direction direction = Direction::increasing;
  VarianceMode variance = VarianceMode::kernel;
  std::optional<double> bandwidth;
  unsigned threads = 1;
  std::size_t grid_points = 201;  // odd, >= 5: the center point anchors the scan
  unsigned max_doublings = 8;
  double refine_tol = 1e-4;  // endpoint bisection tolerance, times the half-width
};

struct CiResult {
  double lower = 0.0;
  double upper = 0.0;
  double a0 = 0.0;
  double alpha = 0.0;
  double theta_hat_a0 = 0.0;
  std::size_t grid_points_scanned = 0;
  bool refined = false;
  bool lower_unbounded = false;  // endpoint reported as -inf
  bool upper_unbounded = false;  // endpoint reported as +inf
  bool empty = false;  // aggregated statistics can reject everywhere; single-sample never
};

/// Level-alpha CI by test inversion over t0. The fits' t0-independent parts
/// and the variance are computed once; the accept region is scanned on a grid
/// around theta_hat(a0) and the endpoints refined by bisection.
CiResult confidence_interval(const Dataset& data, const NuisanceModel& model, double a0,
                             const CiOptions& opt, QuantileSource& quantiles);

/// Grid/bisection engine shared by single-sample and fold-averaged CIs:
/// inverts statistic(t0) <= threshold around `center`.
struct InversionProblem {
  std::function<double(double)> statistic;  // pure; called concurrently
  double center = 0.0;
  double half_width = 0.0;
  double threshold = 0.0;
  std::size_t grid_points = 201;
  unsigned max_doublings = 8;
  double refine_tol = 1e-4;
  unsigned threads = 1;
};

struct InversionOutcome {
  double lower = 0.0;
  double upper = 0.0;
  bool lower_unbounded = false;
  bool upper_unbounded = false;
  bool refined = false;
  bool empty = false;
  std::size_t scanned = 0;  // statistic evaluations, grid plus refinement
};

/// The half-width doubles until both extreme grid points reject (cap
/// max_doublings, then that side is unbounded). The accept run containing the
/// grid argmin is refined by bisection; a non-contiguous accept pattern falls
/// back to the outermost accepted grid points with refined=false.
InversionOutcome invert_statistic(const InversionProblem& prob);

}  // namespace drlrt
