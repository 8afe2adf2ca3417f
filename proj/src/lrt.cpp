#include "drlrt/lrt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "drlrt/errors.hpp"
#include "drlrt/parallel.hpp"
#include "drlrt/pseudo.hpp"

namespace drlrt {

namespace {

constexpr double kVarianceFloor = 1e-12;

void check_level(double alpha, double beta_bound) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw SchemaMismatch("alpha must lie in (0, 1)");
  if (!(beta_bound > 0.0)) throw SchemaMismatch("beta_bound must be positive");
}

std::vector<double> oriented(const std::vector<double>& xi, Direction dir) {
  std::vector<double> out = xi;
  if (dir == Direction::decreasing) {
    for (double& v : out) v = -v;
  }
  return out;
}

double floored_variance(double value, const char* what) {
  if (value < kVarianceFloor) {
    std::fprintf(stderr, "warning: %s %g floored at %g\n", what, value, kVarianceFloor);
    return kVarianceFloor;
  }
  return value;
}

}  // namespace

double silverman_bandwidth(std::span<const double> a) {
  const std::size_t n = a.size();
  if (n < 2) throw TooFewPoints("bandwidth needs at least 2 treatment values");
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : a) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

double noncausal_sigma2(std::span<const double> y_sorted) {
  const std::size_t n = y_sorted.size();
  if (n < 2) throw TooFewPoints("difference variance estimator needs at least 2 points");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = y_sorted[i + 1] - y_sorted[i];
    acc += d * d;
  }
  return acc / (2.0 * static_cast<double>(n - 1));
}

VarianceEstimate kernel_kappa(std::span<const double> a, std::span<const double> eta_sq,
                              double a0, std::optional<double> bandwidth) {
  if (a.size() != eta_sq.size()) {
    throw LengthMismatch("kernel variance: treatment and residual lengths differ");
  }
  if (a.empty()) throw EmptyInput("kernel variance: empty sample");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(a);
  if (!(h > 0.0)) {
    throw EmptyKernelMass("kernel variance: bandwidth is not positive (degenerate treatment spread)");
  }
  double mass = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double z = (a[i] - a0) / h;
    const double w = std::exp(-0.5 * z * z);
    mass += w;
    acc += w * eta_sq[i];
  }
  if (!(mass > 0.0)) {
    throw EmptyKernelMass("kernel variance: all weights underflow; a0 far outside support");
  }
  VarianceEstimate est;
  est.kappa_hat = floored_variance(acc / mass, "kernel variance estimate");
  est.bandwidth = h;
  est.n_effective = mass;
  return est;
}

double lrt_statistic(std::span<const double> xi, const IsotonicFit& full,
                     const ConstrainedFit& constrained, double t0) {
  const std::size_t n = xi.size();
  if (full.values.size() != n || constrained.values.size() != n) {
    throw LengthMismatch("statistic: fit lengths do not match the sample");
  }
  // Both forms are accumulated as per-index differences; the summands stay
  // near zero wherever the fits agree, so large fitted levels do not cancel.
  double direct = 0.0;
  double identity = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rc = xi[i] - constrained.values[i];
    const double rf = xi[i] - full.values[i];
    direct += rc * rc - rf * rf;
    const double df = full.values[i] - t0;
    const double dc = constrained.values[i] - t0;
    identity += df * df - dc * dc;
  }
  if (std::abs(direct - identity) > 1e-8 * (1.0 + std::abs(direct))) {
    throw IdentityViolation("statistic forms disagree: direct " + std::to_string(direct) +
                            " vs fitted-value form " + std::to_string(identity));
  }
  return std::max(0.0, direct);
}

PreparedSample prepare_sample(std::span<const double> a, std::span<const double> xi, double a0) {
  SortedSample sorted = sort_sample(a, xi, a0);
  IsotonicFit full = pava(sorted.xi);
  StepFunction theta = to_step_function(full.values, sorted.a);
  const double at_k0 = full.values[sorted.k0];
  return PreparedSample{std::move(sorted), std::move(full), std::move(theta), at_k0};
}

StatisticValue statistic_at(const PreparedSample& prep, double t0) {
  const ConstrainedFit fit = constrained_fit(prep.sorted.xi, prep.sorted.k0, t0);
  const double s_n = lrt_statistic(prep.sorted.xi, prep.full, fit, t0);
  return StatisticValue{s_n, fit.lambda_hat, fit.active};
}

VarianceEstimate variance_at(const PreparedSample& prep, double a0, VarianceMode mode,
                             std::optional<double> bandwidth) {
  const std::size_t n = prep.sorted.xi.size();
  if (mode == VarianceMode::rice) {
    VarianceEstimate est;
    est.kappa_hat = floored_variance(noncausal_sigma2(prep.sorted.xi), "difference variance estimate");
    est.bandwidth = 0.0;
    est.n_effective = static_cast<double>(n);
    return est;
  }
  std::vector<double> eta_sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = prep.sorted.xi[i] - prep.theta_hat(prep.sorted.a[i]);
    eta_sq[i] = r * r;
  }
  return kernel_kappa(prep.sorted.a, eta_sq, a0, bandwidth);
}

LrtResult run_test(const Dataset& data, const NuisanceModel& model, double a0, double t0,
                   const TestOptions& opt, QuantileSource& quantiles) {
  check_level(opt.alpha, opt.beta_bound);
  if (!std::isfinite(a0) || !std::isfinite(t0)) {
    throw SchemaMismatch("a0 and t0 must be finite");
  }
  const PseudoOutcomes pseudo = compute_pseudo_outcomes(data, model, opt.threads);
  const std::vector<double> xi = oriented(pseudo.xi, opt.direction);
  const double t0_int = opt.direction == Direction::decreasing ? -t0 : t0;

  const PreparedSample prep = prepare_sample(data.a, xi, a0);
  const StatisticValue stat = statistic_at(prep, t0_int);
  const VarianceEstimate var = variance_at(prep, a0, opt.variance, opt.bandwidth);
  const double q = quantiles.critical_value(1.0 - opt.alpha, opt.beta_bound, 1);

  LrtResult r;
  r.a0 = a0;
  r.t0 = t0;
  r.alpha = opt.alpha;
  r.beta_bound = opt.beta_bound;
  r.s_n = stat.s_n;
  r.kappa_hat = var.kappa_hat;
  r.q_crit = q;
  r.reject = r.s_n > r.kappa_hat * q;
  r.lambda_hat = opt.direction == Direction::decreasing ? -stat.lambda_hat : stat.lambda_hat;
  r.mode = opt.mode;
  r.n = data.n();
  if (opt.variance == VarianceMode::kernel) r.bandwidth = var.bandwidth;
  if (opt.with_p_value) {
    if (const DbetaQuantiles* draws = quantiles.draws_for(1.0 - opt.alpha, opt.beta_bound, 1)) {
      const double p = draws->tail_prob(r.s_n / r.kappa_hat);
      r.p_value = p;
      r.p_value_se = std::sqrt(p * (1.0 - p) / static_cast<double>(draws->draws().size()));
    }
  }
  return r;
}

InversionOutcome invert_statistic(const InversionProblem& prob) {
  const std::size_t g = prob.grid_points;
  if (g < 5 || g % 2 == 0) throw SchemaMismatch("inversion grid needs an odd size of at least 5");
  if (!(prob.half_width > 0.0)) throw SchemaMismatch("inversion half-width must be positive");
  if (!(prob.refine_tol > 0.0)) throw SchemaMismatch("refinement tolerance must be positive");

  const double half_idx = static_cast<double>((g - 1) / 2);
  InversionOutcome out;
  std::vector<double> grid(g), s(g);
  double r = prob.half_width;
  for (unsigned round = 0;; ++round) {
    for (std::size_t i = 0; i < g; ++i) {
      grid[i] = prob.center + r * ((static_cast<double>(i) - half_idx) / half_idx);
    }
    parallel_for(g, prob.threads, [&](std::size_t i) { s[i] = prob.statistic(grid[i]); });
    out.scanned += g;
    const bool edge_accepted = s.front() <= prob.threshold || s.back() <= prob.threshold;
    if (!edge_accepted || round >= prob.max_doublings) break;
    r *= 2.0;
  }
  out.lower_unbounded = s.front() <= prob.threshold;
  out.upper_unbounded = s.back() <= prob.threshold;

  const std::size_t anchor = static_cast<std::size_t>(
      std::min_element(s.begin(), s.end()) - s.begin());
  const auto accepted = [&](std::size_t i) { return s[i] <= prob.threshold; };
  if (!accepted(anchor)) {
    out.empty = true;
    out.lower = std::numeric_limits<double>::quiet_NaN();
    out.upper = std::numeric_limits<double>::quiet_NaN();
    return out;
  }

  std::size_t lo = anchor;
  while (lo > 0 && accepted(lo - 1)) --lo;
  std::size_t hi = anchor;
  while (hi + 1 < g && accepted(hi + 1)) ++hi;
  bool contiguous = true;
  for (std::size_t i = 0; i < g && contiguous; ++i) {
    if (accepted(i) && (i < lo || i > hi)) contiguous = false;
  }
  if (!contiguous) {
    // Quasi-convexity failed on this sample; report the conservative hull of
    // the accepted grid points without bisection.
    std::size_t first = 0;
    while (!accepted(first)) ++first;
    std::size_t last = g - 1;
    while (!accepted(last)) --last;
    out.lower = out.lower_unbounded ? -std::numeric_limits<double>::infinity() : grid[first];
    out.upper = out.upper_unbounded ? std::numeric_limits<double>::infinity() : grid[last];
    out.refined = false;
    return out;
  }

  const double tol = prob.refine_tol * r;
  if (out.lower_unbounded) {
    out.lower = -std::numeric_limits<double>::infinity();
  } else {
    double rej = grid[lo - 1];
    double acc = grid[lo];
    while (acc - rej > tol) {
      const double mid = 0.5 * (rej + acc);
      ++out.scanned;
      if (prob.statistic(mid) <= prob.threshold) acc = mid; else rej = mid;
    }
    out.lower = acc;
  }
  if (out.upper_unbounded) {
    out.upper = std::numeric_limits<double>::infinity();
  } else {
    double acc = grid[hi];
    double rej = grid[hi + 1];
    while (rej - acc > tol) {
      const double mid = 0.5 * (acc + rej);
      ++out.scanned;
      if (prob.statistic(mid) <= prob.threshold) acc = mid; else rej = mid;
    }
    out.upper = acc;
  }
  out.refined = true;
  return out;
}

CiResult confidence_interval(const Dataset& data, const NuisanceModel& model, double a0,
                             const CiOptions& opt, QuantileSource& quantiles) {
  check_level(opt.alpha, opt.beta_bound);
  if (!std::isfinite(a0)) throw SchemaMismatch("a0 must be finite");
  const PseudoOutcomes pseudo = compute_pseudo_outcomes(data, model, opt.threads);
  const std::vector<double> xi = oriented(pseudo.xi, opt.direction);

  const PreparedSample prep = prepare_sample(data.a, xi, a0);
  const VarianceEstimate var = variance_at(prep, a0, opt.variance, opt.bandwidth);
  const double q = quantiles.critical_value(1.0 - opt.alpha, opt.beta_bound, 1);

  const auto [xi_min, xi_max] = std::minmax_element(prep.sorted.xi.begin(), prep.sorted.xi.end());
  const double rate = std::pow(static_cast<double>(data.n()),
                               -opt.beta_bound / (2.0 * opt.beta_bound + 1.0));
  InversionProblem prob;
  prob.statistic = [&prep](double t0) { return statistic_at(prep, t0).s_n; };
  prob.center = prep.theta_hat_a0;
  prob.half_width = std::max(4.0 * std::sqrt(var.kappa_hat) * rate, (*xi_max - *xi_min) / 4.0);
  prob.threshold = var.kappa_hat * q;
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
    r.theta_hat_a0 = -prep.theta_hat_a0;
    r.lower = -out.upper;
    r.upper = -out.lower;
    r.lower_unbounded = out.upper_unbounded;
    r.upper_unbounded = out.lower_unbounded;
  } else {
    r.theta_hat_a0 = prep.theta_hat_a0;
    r.lower = out.lower;
    r.upper = out.upper;
    r.lower_unbounded = out.lower_unbounded;
    r.upper_unbounded = out.upper_unbounded;
  }
  return r;
}

}  // namespace drlrt
