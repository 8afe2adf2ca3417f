#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "drlrt/rng.hpp"

namespace drlrt {

/// Monte Carlo configuration for the pivotal limit distribution D_beta.
///
/// D_beta = integral of (theta^2 - theta0^2), where theta / theta0 are the
/// unconstrained / zero-constrained monotone projections of the derivative of
/// M(t) = W(t) + |t|^{beta+1} (W two-sided Brownian motion), discretised on a
/// uniform grid over [-half_width, half_width].
struct LimitSimConfig {
  double beta = 1.0;
  double half_width = 5.0;
  double grid_step = 0.005;
  std::size_t n_mc = 10000;
  std::uint64_t seed = 0;
};

/// Sorted Monte Carlo draws of D_beta (or of a K-fold average of independent
/// copies), with order-statistic quantile access.
class DbetaQuantiles {
public:
  DbetaQuantiles(double beta, unsigned k_fold, std::vector<double> sorted_draws);

  /// Linear interpolation between order statistics at rank alpha*(n-1)+1
  /// (1-based): quantile(0) = min, quantile(1) = max. alpha is clamped to [0,1].
  double quantile(double alpha) const;

  /// Fraction of draws strictly greater than x.
  double tail_prob(double x) const;

  /// Rank-spread standard error of quantile(alpha) (binomial fluctuation of
  /// the empirical rank mapped through adjacent order statistics).
  double quantile_se(double alpha) const;

  double beta() const { return beta_; }
  unsigned k_fold() const { return k_fold_; }
  const std::vector<double>& draws() const { return draws_; }

private:
  double beta_ = 0.0;
  unsigned k_fold_ = 1;
  std::vector<double> draws_;
};

/// Internal grid tables shared by every draw of one configuration.
struct LimitGrid {
  explicit LimitGrid(const LimitSimConfig& cfg);
  std::size_t m = 0;               // half grid count; 2m cells
  double step = 0.0;
  double inv_sqrt_step = 0.0;
  std::vector<double> drift_slope; // per-cell drift increment / step
  std::size_t k0 = 0;              // cell whose left endpoint is 0
};

/// One D_beta draw. Consumes 2m standard normals from rng.
double simulate_dbeta_draw(const LimitGrid& grid, StreamRng& rng);
double simulate_dbeta_draw(const LimitSimConfig& cfg, StreamRng& rng);

/// n_mc draws with draw j on substream (cfg.seed, j); results are identical
/// for any thread count.
DbetaQuantiles simulate_dbeta(const LimitSimConfig& cfg, unsigned threads = 1);

/// Draws of the K-fold average (mean of K independent D_beta copies), draw j
/// averaging substreams (cfg.seed, j*K + k). K = 1 reproduces simulate_dbeta
/// exactly (same substreams).
DbetaQuantiles crossfit_reference(const LimitSimConfig& cfg, unsigned k_folds,
                                  unsigned threads = 1);

/// Critical values q_{alpha,beta} of D_beta for tabulated alpha in
/// {0.85, 0.90, 0.95, 0.975, 0.99} and beta in [0.01, 5].
class CriticalValueTable {
public:
  static const CriticalValueTable& published();

  /// Exact alpha row required (QuantileUnavailable otherwise); beta is clamped
  /// to [0.01, 5] and linearly interpolated between tabulated values.
  double lookup(double alpha, double beta) const;
  bool has_alpha(double alpha) const;

  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& betas() const { return betas_; }
  double cell(std::size_t alpha_idx, std::size_t beta_idx) const;

private:
  CriticalValueTable();
  void validate() const;  // strictly increasing in alpha, nondecreasing in beta
  std::vector<double> alphas_;
  std::vector<double> betas_;
  std::vector<std::vector<double>> q_;  // q_[alpha_idx][beta_idx]
};

enum class QuantilePolicy { table, simulate, table_then_simulate };

/// Provider of critical values under a lookup policy, caching simulated
/// reference distributions per (beta, K). Not thread-safe; populate before
/// fanning out.
class QuantileSource {
public:
  QuantileSource(QuantilePolicy policy, LimitSimConfig base, unsigned threads = 1);

  /// q_{alpha, beta} for the K-fold averaged reference. K > 1 always requires
  /// simulation; policy "table" then throws QuantileUnavailable.
  double critical_value(double alpha, double beta, unsigned k_fold = 1);

  /// Simulated draws backing (beta, K) if the policy permits simulation;
  /// nullptr when the value came from the table.
  const DbetaQuantiles* draws_for(double alpha, double beta, unsigned k_fold = 1);

  QuantilePolicy policy() const { return policy_; }
  const LimitSimConfig& config() const { return base_; }

private:
  const DbetaQuantiles& simulated(double beta, unsigned k_fold);
  QuantilePolicy policy_;
  LimitSimConfig base_;
  unsigned threads_;
  std::map<std::pair<double, unsigned>, std::unique_ptr<DbetaQuantiles>> cache_;
};

/// One-shot critical value under a policy (simulation configured by cfg).
double lookup_q(double alpha, double beta, QuantilePolicy policy,
                const LimitSimConfig& cfg = {}, unsigned threads = 1);

}  // namespace drlrt
