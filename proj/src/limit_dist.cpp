#include "drlrt/limit_dist.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <string>

#include "drlrt/errors.hpp"
#include "drlrt/isotonic.hpp"
#include "drlrt/parallel.hpp"

namespace drlrt {

DbetaQuantiles::DbetaQuantiles(double beta, unsigned k_fold, std::vector<double> sorted_draws)
    : beta_(beta), k_fold_(k_fold), draws_(std::move(sorted_draws)) {
  if (draws_.empty()) throw EmptyInput("DbetaQuantiles: no draws");
  if (!std::is_sorted(draws_.begin(), draws_.end()))
    throw SchemaMismatch("DbetaQuantiles: draws must be sorted");
}

double DbetaQuantiles::quantile(double alpha) const {
  alpha = std::clamp(alpha, 0.0, 1.0);
  const std::size_t n = draws_.size();
  const double pos = alpha * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return draws_.back();
  return draws_[lo] + frac * (draws_[lo + 1] - draws_[lo]);
}

double DbetaQuantiles::tail_prob(double x) const {
  const auto it = std::upper_bound(draws_.begin(), draws_.end(), x);
  return static_cast<double>(draws_.end() - it) / static_cast<double>(draws_.size());
}

double DbetaQuantiles::quantile_se(double alpha) const {
  alpha = std::clamp(alpha, 0.0, 1.0);
  const double n = static_cast<double>(draws_.size());
  const double spread = std::sqrt(std::max(alpha * (1.0 - alpha) * n, 1.0));
  const double pos = alpha * (n - 1.0);
  const auto at = [&](double p) {
    const double clamped = std::clamp(p, 0.0, n - 1.0);
    return draws_[static_cast<std::size_t>(clamped)];
  };
  return 0.5 * (at(std::ceil(pos + spread)) - at(std::floor(pos - spread)));
}

LimitGrid::LimitGrid(const LimitSimConfig& cfg) {
  if (!(cfg.grid_step > 0.0) || !(cfg.half_width > 0.0))
    throw SchemaMismatch("limit grid: half_width and grid_step must be positive");
  m = static_cast<std::size_t>(std::llround(cfg.half_width / cfg.grid_step));
  if (m == 0) throw SchemaMismatch("limit grid: fewer than one cell per side");
  step = cfg.grid_step;
  inv_sqrt_step = 1.0 / std::sqrt(step);
  k0 = m;  // cell [0, step)

  // Drift contribution to the cell derivative: (|x_{j+1}|^{b+1} - |x_j|^{b+1}) / step.
  const double p = cfg.beta + 1.0;
  drift_slope.resize(2 * m);
  auto drift = [&](std::ptrdiff_t i) {
    return std::pow(std::abs(static_cast<double>(i) * step), p);
  };
  for (std::size_t j = 0; j < 2 * m; ++j) {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(m);
    drift_slope[j] = (drift(i + 1) - drift(i)) / step;
  }
}

double simulate_dbeta_draw(const LimitGrid& grid, StreamRng& rng) {
  const std::size_t n = grid.drift_slope.size();
  std::vector<double> y(n);
  // Brownian increments over disjoint cells are iid N(0, step); the cell
  // derivative is increment/step = Z/sqrt(step) plus the drift slope.
  for (std::size_t j = 0; j < n; ++j) y[j] = rng.normal() * grid.inv_sqrt_step + grid.drift_slope[j];

  const IsotonicFit full = pava(y);
  const ConstrainedFit null_fit = constrained_fit(y, grid.k0, 0.0);

  // Summing per-index differences keeps terms outside the (local) region where
  // the fits differ exactly zero; whole-sum subtraction would cancel
  // catastrophically for large beta.
  double s = 0.0, check = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double f = full.values[j], z = null_fit.values[j];
    s += f * f - z * z;
    const double rf = y[j] - f, rz = y[j] - z;
    check += rz * rz - rf * rf;
  }
  s *= grid.step;
  check *= grid.step;
  if (std::abs(s - check) > 1e-6 * (1.0 + std::abs(s)))
    throw IdentityViolation("dbeta draw: squared-difference identity failed: " +
                            std::to_string(s) + " vs " + std::to_string(check));
  return s;
}

double simulate_dbeta_draw(const LimitSimConfig& cfg, StreamRng& rng) {
  return simulate_dbeta_draw(LimitGrid(cfg), rng);
}

namespace {

DbetaQuantiles simulate_averaged(const LimitSimConfig& cfg, unsigned k_folds, unsigned threads) {
  if (cfg.n_mc == 0) throw EmptyInput("simulate_dbeta: n_mc = 0");
  if (k_folds == 0) throw SchemaMismatch("simulate_dbeta: k_folds = 0");
  const LimitGrid grid(cfg);
  std::vector<double> draws(cfg.n_mc);
  std::atomic<std::size_t> clamped{0};
  parallel_for(cfg.n_mc, threads, [&](std::size_t j) {
    double acc = 0.0;
    for (unsigned k = 0; k < k_folds; ++k) {
      StreamRng rng(cfg.seed, static_cast<std::uint64_t>(j) * k_folds + k);
      acc += simulate_dbeta_draw(grid, rng);
    }
    double d = acc / static_cast<double>(k_folds);
    if (d < 0.0) {
      clamped.fetch_add(1, std::memory_order_relaxed);
      d = 0.0;
    }
    draws[j] = d;
  });
  if (clamped.load() * 100 >= cfg.n_mc)
    std::fprintf(stderr,
                 "warning: %zu of %zu limit-distribution draws were negative and clamped; "
                 "grid_step %g may be too coarse\n",
                 clamped.load(), cfg.n_mc, cfg.grid_step);
  std::sort(draws.begin(), draws.end());
  return DbetaQuantiles(cfg.beta, k_folds, std::move(draws));
}

}  // namespace

DbetaQuantiles simulate_dbeta(const LimitSimConfig& cfg, unsigned threads) {
  return simulate_averaged(cfg, 1, threads);
}

DbetaQuantiles crossfit_reference(const LimitSimConfig& cfg, unsigned k_folds, unsigned threads) {
  return simulate_averaged(cfg, k_folds, threads);
}

CriticalValueTable::CriticalValueTable() {
  alphas_ = {0.85, 0.90, 0.95, 0.975, 0.99};
  betas_ = {0.01, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 5.0};
  q_ = {
      {0.90, 0.99, 1.09, 1.15, 1.20, 1.24, 1.33, 1.40},  // 0.85
      {1.17, 1.29, 1.40, 1.49, 1.55, 1.60, 1.73, 1.83},  // 0.90
      {1.65, 1.81, 1.98, 2.10, 2.18, 2.25, 2.44, 2.57},  // 0.95
      {2.17, 2.33, 2.55, 2.73, 2.86, 2.92, 3.16, 3.35},  // 0.975
      {2.85, 3.06, 3.34, 3.56, 3.75, 3.89, 4.19, 4.45},  // 0.99
  };
  validate();
}

void CriticalValueTable::validate() const {
  for (std::size_t b = 0; b < betas_.size(); ++b)
    for (std::size_t a = 1; a < alphas_.size(); ++a)
      if (!(q_[a][b] > q_[a - 1][b]))
        throw QuantileUnavailable("critical value table: not increasing in alpha");
  for (std::size_t a = 0; a < alphas_.size(); ++a)
    for (std::size_t b = 1; b < betas_.size(); ++b)
      if (!(q_[a][b] >= q_[a][b - 1]))
        throw QuantileUnavailable("critical value table: decreasing in beta");
}

const CriticalValueTable& CriticalValueTable::published() {
  static const CriticalValueTable table;
  return table;
}

bool CriticalValueTable::has_alpha(double alpha) const {
  for (double a : alphas_)
    if (std::abs(a - alpha) <= 1e-9) return true;
  return false;
}

double CriticalValueTable::cell(std::size_t alpha_idx, std::size_t beta_idx) const {
  return q_[alpha_idx][beta_idx];
}

double CriticalValueTable::lookup(double alpha, double beta) const {
  std::size_t ai = alphas_.size();
  for (std::size_t a = 0; a < alphas_.size(); ++a)
    if (std::abs(alphas_[a] - alpha) <= 1e-9) {
      ai = a;
      break;
    }
  if (ai == alphas_.size())
    throw QuantileUnavailable("critical value table: alpha = " + std::to_string(alpha) +
                              " is not tabulated");
  const double b = std::clamp(beta, betas_.front(), betas_.back());
  const auto it = std::lower_bound(betas_.begin(), betas_.end(), b);
  const std::size_t hi = static_cast<std::size_t>(it - betas_.begin());
  if (hi == 0 || betas_[hi] == b) return q_[ai][hi];
  const std::size_t lo = hi - 1;
  const double w = (b - betas_[lo]) / (betas_[hi] - betas_[lo]);
  return q_[ai][lo] + w * (q_[ai][hi] - q_[ai][lo]);
}

QuantileSource::QuantileSource(QuantilePolicy policy, LimitSimConfig base, unsigned threads)
    : policy_(policy), base_(base), threads_(threads) {}

const DbetaQuantiles& QuantileSource::simulated(double beta, unsigned k_fold) {
  const auto key = std::make_pair(beta, k_fold);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    LimitSimConfig cfg = base_;
    cfg.beta = beta;
    it = cache_
             .emplace(key, std::make_unique<DbetaQuantiles>(
                               crossfit_reference(cfg, k_fold, threads_)))
             .first;
  }
  return *it->second;
}

double QuantileSource::critical_value(double alpha, double beta, unsigned k_fold) {
  const bool table_can = k_fold == 1 && CriticalValueTable::published().has_alpha(alpha);
  switch (policy_) {
    case QuantilePolicy::table:
      if (!table_can)
        throw QuantileUnavailable(
            "quantile lookup: policy 'table' cannot serve alpha = " + std::to_string(alpha) +
            ", K = " + std::to_string(k_fold));
      return CriticalValueTable::published().lookup(alpha, beta);
    case QuantilePolicy::simulate:
      return simulated(beta, k_fold).quantile(alpha);
    case QuantilePolicy::table_then_simulate:
      if (table_can) return CriticalValueTable::published().lookup(alpha, beta);
      return simulated(beta, k_fold).quantile(alpha);
  }
  throw QuantileUnavailable("quantile lookup: unknown policy");
}

const DbetaQuantiles* QuantileSource::draws_for(double alpha, double beta, unsigned k_fold) {
  const bool table_can = k_fold == 1 && CriticalValueTable::published().has_alpha(alpha);
  if (policy_ == QuantilePolicy::table) return nullptr;
  if (policy_ == QuantilePolicy::table_then_simulate && table_can) return nullptr;
  return &simulated(beta, k_fold);
}

double lookup_q(double alpha, double beta, QuantilePolicy policy, const LimitSimConfig& cfg,
                unsigned threads) {
  QuantileSource source(policy, cfg, threads);
  return source.critical_value(alpha, beta, 1);
}

}  // namespace drlrt
