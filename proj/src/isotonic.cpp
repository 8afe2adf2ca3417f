#include "drlrt/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "drlrt/errors.hpp"

namespace drlrt {

namespace {

struct Pool {
  std::size_t begin;
  std::size_t count;
  double sum;
};

// One left-to-right PAVA pass over xi with `shift` added at shift_index.
// (shift_index == size for no shift.) Pools end up with strictly increasing
// means because adjacent pools with equal means are merged.
void pava_pools(std::span<const double> xi, std::size_t shift_index, double shift,
                std::vector<Pool>& pools) {
  pools.clear();
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double v = i == shift_index ? xi[i] + shift : xi[i];
    pools.push_back(Pool{i, 1, v});
    while (pools.size() >= 2) {
      Pool& prev = pools[pools.size() - 2];
      Pool& last = pools.back();
      if (prev.sum / static_cast<double>(prev.count) <
          last.sum / static_cast<double>(last.count))
        break;
      prev.count += last.count;
      prev.sum += last.sum;
      pools.pop_back();
    }
  }
}

void pools_to_fit(std::span<const double> xi, const std::vector<Pool>& pools, IsotonicFit& fit) {
  fit.values.resize(xi.size());
  fit.blocks.clear();
  fit.blocks.reserve(pools.size());
  for (const Pool& p : pools) {
    const double level = p.sum / static_cast<double>(p.count);
    fit.blocks.push_back(IsotonicBlock{p.begin, p.begin + p.count, level});
    for (std::size_t i = p.begin; i < p.begin + p.count; ++i) fit.values[i] = level;
  }
  fit.sse = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double r = xi[i] - fit.values[i];
    fit.sse += r * r;
  }
}

}  // namespace

IsotonicFit pava(std::span<const double> xi) {
  if (xi.empty()) throw EmptyInput("pava: empty input");
  std::vector<Pool> pools;
  pools.reserve(xi.size());
  pava_pools(xi, xi.size(), 0.0, pools);
  IsotonicFit fit;
  pools_to_fit(xi, pools, fit);
  return fit;
}

double maxmin_at(std::span<const double> xi, std::size_t k0, double shift) {
  if (xi.empty()) throw EmptyInput("maxmin_at: empty input");
  if (k0 >= xi.size())
    throw IndexOutOfRange("maxmin_at: k0 = " + std::to_string(k0) + " with n = " +
                          std::to_string(xi.size()));
  thread_local std::vector<Pool> pools;
  pools.reserve(xi.size());
  pava_pools(xi, k0, shift, pools);
  // The pool covering k0; pools are ordered by begin.
  auto it = std::upper_bound(pools.begin(), pools.end(), k0,
                             [](std::size_t v, const Pool& p) { return v < p.begin; });
  const Pool& p = *(it - 1);
  return p.sum / static_cast<double>(p.count);
}

double solve_lambda(std::span<const double> xi, std::size_t k0, double t0) {
  if (xi.empty()) throw EmptyInput("solve_lambda: empty input");
  if (k0 >= xi.size())
    throw IndexOutOfRange("solve_lambda: k0 = " + std::to_string(k0) + " with n = " +
                          std::to_string(xi.size()));

  const double n = static_cast<double>(xi.size());
  double max_abs = 0.0;
  for (double v : xi) max_abs = std::max(max_abs, std::abs(v));
  double half = std::abs(t0) + max_abs;
  if (half <= 0.0 || !std::isfinite(half)) half = 1.0;

  const auto phi = [&](double lambda) { return maxmin_at(xi, k0, n * lambda); };

  // phi(+-half) straddles t0 for any finite input; doubling is defensive.
  double lo = -half, hi = half;
  int doublings = 0;
  while (!(phi(lo) <= t0)) {
    lo *= 2.0;
    if (++doublings > 200) throw BracketFailure("solve_lambda: no lower bracket (non-finite input?)");
  }
  while (!(phi(hi) >= t0)) {
    hi *= 2.0;
    if (++doublings > 200) throw BracketFailure("solve_lambda: no upper bracket (non-finite input?)");
  }

  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    mid = 0.5 * (lo + hi);
    const double f = phi(mid);
    if (std::abs(f - t0) <= 1e-10 * (1.0 + std::abs(t0))) return mid;
    if (f < t0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-12 * (1.0 + std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

ConstrainedFit constrained_fit(std::span<const double> xi, std::size_t k0, double t0) {
  if (xi.empty()) throw EmptyInput("constrained_fit: empty input");
  if (k0 >= xi.size())
    throw IndexOutOfRange("constrained_fit: k0 = " + std::to_string(k0) + " with n = " +
                          std::to_string(xi.size()));

  IsotonicFit full = pava(xi);
  ConstrainedFit out;
  out.t0 = t0;
  out.k0 = k0;
  if (std::abs(full.values[k0] - t0) <= 1e-12 * (1.0 + std::abs(t0))) {
    out.values = std::move(full.values);
    out.blocks = std::move(full.blocks);
    out.lambda_hat = 0.0;
    out.active = false;
    out.sse = full.sse;
    return out;
  }

  out.active = true;
  out.lambda_hat = solve_lambda(xi, k0, t0);
  const double n = static_cast<double>(xi.size());

  std::vector<Pool> pools;
  pools.reserve(xi.size());
  pava_pools(xi, k0, n * out.lambda_hat, pools);
  out.values.resize(xi.size());
  for (const Pool& p : pools) {
    const double level = p.sum / static_cast<double>(p.count);
    for (std::size_t i = p.begin; i < p.begin + p.count; ++i) out.values[i] = level;
  }

  // Clamp the block containing k0 to exactly t0, then guard monotonicity
  // against the bisection residue (neighbouring levels can sit within the
  // residue of t0).
  auto it = std::upper_bound(pools.begin(), pools.end(), k0,
                             [](std::size_t v, const Pool& p) { return v < p.begin; });
  const Pool& pk = *(it - 1);
  for (std::size_t i = pk.begin; i < pk.begin + pk.count; ++i) out.values[i] = t0;
  for (std::size_t i = 0; i < pk.begin; ++i) out.values[i] = std::min(out.values[i], t0);
  for (std::size_t i = pk.begin + pk.count; i < xi.size(); ++i)
    out.values[i] = std::max(out.values[i], t0);

  // Rebuild blocks from the clamped values (clamping can merge neighbours).
  out.blocks.clear();
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= xi.size(); ++i) {
    if (i == xi.size() || out.values[i] != out.values[begin]) {
      out.blocks.push_back(IsotonicBlock{begin, i, out.values[begin]});
      begin = i;
    }
  }

  out.sse = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double r = xi[i] - out.values[i];
    out.sse += r * r;
  }
  return out;
}

}  // namespace drlrt
