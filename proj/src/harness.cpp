#include "drlrt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "drlrt/crossfit.hpp"
#include "drlrt/errors.hpp"
#include "drlrt/io.hpp"
#include "drlrt/lrt.hpp"
#include "drlrt/parallel.hpp"
#include "drlrt/pseudo.hpp"

namespace drlrt {

namespace {

// Odd quartic ramp saturating at +-0.4 * 1.5^4 beyond |a| = 1.5.
double quartic_plateau(double a) {
  const double x = std::min(std::abs(a), 1.5);
  const double ramp = 0.4 * x * x * x * x;
  return a < 0.0 ? ramp : -ramp;
}

double true_mu(double s, const double* l, double a) {
  return s * (2.0 * l[0] + 2.0 * l[1] - 2.0 * l[2] - 2.0 * l[3]) +
         0.0025 * a * (-l[0] + l[2] - 0.2 * a * a) + quartic_plateau(a);
}

struct RepCell {
  bool ok = false;
  bool rejected = false;
  double length = 0.0;
};

/// Interval length from inverting statistic(t) <= threshold on a prepared
/// sample; length is invariant under the orientation mapping, so the caller
/// never needs to flip endpoints. Empty intervals report length 0; an
/// unreached rejection boundary propagates as +inf.
double ci_length(const PreparedSample& prep, double kappa_hat, double q, double beta_bound) {
  const auto [lo, hi] = std::minmax_element(prep.sorted.xi.begin(), prep.sorted.xi.end());
  const double n = static_cast<double>(prep.sorted.xi.size());
  const double rate = std::pow(n, -beta_bound / (2.0 * beta_bound + 1.0));
  InversionProblem prob;
  prob.statistic = [&prep](double t) { return statistic_at(prep, t).s_n; };
  prob.center = prep.theta_hat_a0;
  prob.half_width = std::max(4.0 * std::sqrt(kappa_hat) * rate, (*hi - *lo) / 4.0);
  prob.threshold = kappa_hat * q;
  const InversionOutcome out = invert_statistic(prob);
  if (out.empty) return 0.0;
  return out.upper - out.lower;
}

}  // namespace

double true_theta(double a) { return quartic_plateau(a) - 0.0005 * a * a * a; }

Dataset draw_dataset(const DgpConfig& cfg, StreamRng& rng) {
  Dataset data;
  data.d = 4;
  data.l.resize(cfg.n * 4);
  data.a.resize(cfg.n);
  data.y.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    double* l = data.l.data() + i * 4;
    for (std::size_t j = 0; j < 4; ++j) l[j] = rng.normal();
    data.a[i] = 7.5 + cfg.s * (l[0] + l[1] - l[2] - l[3]) + 7.5 * rng.normal();
    data.y[i] = true_mu(cfg.s, l, data.a[i]) + 0.5 * rng.normal();
  }
  return data;
}

Dataset draw_dataset(const DgpConfig& cfg) {
  StreamRng rng(cfg.seed, 0);
  return draw_dataset(cfg, rng);
}

std::string to_string(Scenario sc) {
  switch (sc) {
    case Scenario::both_well: return "both_well";
    case Scenario::mu_well_pi_mis: return "mu_well_pi_mis";
    case Scenario::pi_well_mu_mis: return "pi_well_mu_mis";
    case Scenario::external: return "external";
  }
  throw IndexOutOfRange("unknown scenario");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::lrt: return "lrt";
    case Method::lrt_ss: return "lrt_ss";
  }
  throw IndexOutOfRange("unknown method");
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "both_well") return Scenario::both_well;
  if (name == "mu_well_pi_mis") return Scenario::mu_well_pi_mis;
  if (name == "pi_well_mu_mis") return Scenario::pi_well_mu_mis;
  if (name == "external") return Scenario::external;
  throw SchemaMismatch("unknown scenario '" + name +
                       "' (expected both_well, mu_well_pi_mis, pi_well_mu_mis, external)");
}

Method method_from_string(const std::string& name) {
  if (name == "lrt") return Method::lrt;
  if (name == "lrt_ss") return Method::lrt_ss;
  throw SchemaMismatch("unknown method '" + name + "' (expected lrt, lrt_ss)");
}

NuisanceSpec scenario_spec(Scenario sc, double sigma2) {
  NuisanceSpec spec;
  spec.sigma2 = sigma2;
  switch (sc) {
    case Scenario::both_well:
      break;
    case Scenario::mu_well_pi_mis:
      spec.propensity = PropensitySpec::intercept_l1;
      break;
    case Scenario::pi_well_mu_mis:
      spec.outcome = OutcomeSpec::intercept_l1;
      break;
    case Scenario::external:
      throw SchemaMismatch("the external scenario loads tables instead of fitting");
  }
  return spec;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, QuantileSource& quantiles) {
  const auto t_start = std::chrono::steady_clock::now();
  if (spec.eval_points.empty()) throw EmptyInput("experiment needs at least one evaluation point");
  if (spec.n_mc == 0) throw EmptyInput("experiment needs at least one replication");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) throw SchemaMismatch("alpha must lie in (0, 1)");
  if (!(spec.beta_bound > 0.0)) throw SchemaMismatch("beta_bound must be positive");
  if (spec.scenario == Scenario::external) {
    if (spec.external_dir.empty()) {
      throw SchemaMismatch("external scenario needs a directory of nuisance tables");
    }
    if (spec.method == Method::lrt_ss) {
      throw EvaluationUnavailable("external nuisance tables cannot be cross-fit");
    }
  }

  const std::size_t k_eff = spec.method == Method::lrt_ss ? spec.K : 1;
  // One warming lookup; replications then only hit the cache, which makes the
  // non-thread-safe source usable from the parallel loop below.
  const double q_level = 1.0 - spec.alpha;
  const double q = quantiles.critical_value(q_level, spec.beta_bound, k_eff);

  const NuisanceSpec nspec =
      spec.scenario == Scenario::external ? NuisanceSpec{} : scenario_spec(spec.scenario);
  const std::size_t n_eval = spec.eval_points.size();
  std::vector<RepCell> slots(spec.n_mc * n_eval);

  parallel_for(spec.n_mc, spec.threads, [&](std::size_t r) {
    RepCell* mine = slots.data() + r * n_eval;
    try {
      StreamRng rng(spec.base_seed, r);
      const Dataset data = draw_dataset(spec.dgp, rng);
      if (!spec.export_dir.empty()) {
        write_dataset_csv(spec.export_dir + "/data_" + std::to_string(r) + ".csv", data);
      }

      if (spec.method == Method::lrt) {
        const NuisanceModel model = [&]() -> NuisanceModel {
          if (spec.scenario == Scenario::external) {
            const std::string base = spec.external_dir + "/nuisance_" + std::to_string(r);
            const std::string mpath = base + "_mu_matrix.csv";
            return NuisanceModel{load_external_nuisance(
                base + ".csv", std::filesystem::exists(mpath) ? mpath : std::string())};
          }
          return NuisanceModel{fit_nuisance(data, nspec, data)};
        }();
        const PseudoOutcomes pseudo = compute_pseudo_outcomes(data, model, 1);
        std::vector<double> xi = pseudo.xi;  // decreasing orientation
        for (double& v : xi) v = -v;
        for (std::size_t e = 0; e < n_eval; ++e) {
          try {
            const double a0 = spec.eval_points[e];
            const PreparedSample prep = prepare_sample(data.a, xi, a0);
            const StatisticValue stat = statistic_at(prep, -true_theta(a0));
            const VarianceEstimate var = variance_at(prep, a0, VarianceMode::kernel);
            mine[e].rejected = stat.s_n > var.kappa_hat * q;
            mine[e].length = ci_length(prep, var.kappa_hat, q, spec.beta_bound);
            mine[e].ok = true;
          } catch (const Error&) {
            mine[e].ok = false;
          }
        }
      } else {
        const std::uint64_t fold_seed = mix64(spec.base_seed) ^ r;
        const FoldAssignment folds = assign_folds(data.n(), spec.K, fold_seed);
        const std::vector<FoldData> folds_data = crossfit_pseudo(data, nspec, folds, 1);
        CrossfitOptions copt;
        copt.alpha = spec.alpha;
        copt.beta_bound = spec.beta_bound;
        copt.K = spec.K;
        copt.fold_seed = fold_seed;
        copt.direction = Direction::decreasing;
        for (std::size_t e = 0; e < n_eval; ++e) {
          try {
            const double a0 = spec.eval_points[e];
            const CrossfitResult test =
                crossfit_eval(folds_data, a0, true_theta(a0), copt, quantiles);
            const CiResult ci = crossfit_ci_eval(folds_data, a0, copt, quantiles);
            mine[e].rejected = test.reject;
            mine[e].length = ci.empty ? 0.0 : ci.upper - ci.lower;
            mine[e].ok = true;
          } catch (const Error&) {
            mine[e].ok = false;
          }
        }
      }
    } catch (const Error&) {
      for (std::size_t e = 0; e < n_eval; ++e) mine[e].ok = false;
    }
  });

  ExperimentResult result;
  result.n_mc = spec.n_mc;
  result.cells.resize(n_eval);
  std::string overflow;
  for (std::size_t e = 0; e < n_eval; ++e) {
    CellResult& cell = result.cells[e];
    cell.a = spec.eval_points[e];
    std::vector<double> lengths;
    std::size_t n_reject = 0;
    for (std::size_t r = 0; r < spec.n_mc; ++r) {
      const RepCell& rc = slots[r * n_eval + e];
      if (!rc.ok) {
        ++cell.failures;
        continue;
      }
      ++cell.n_ok;
      n_reject += rc.rejected ? 1 : 0;
      lengths.push_back(rc.length);
    }
    if (cell.failures * 100 > spec.n_mc && overflow.empty()) {
      overflow = "evaluation point " + format_double(cell.a) + " lost " +
                 std::to_string(cell.failures) + " of " + std::to_string(spec.n_mc) +
                 " replications";
    }
    if (cell.n_ok == 0) continue;
    const double nok = static_cast<double>(cell.n_ok);
    cell.level = static_cast<double>(n_reject) / nok;
    cell.level_se = std::sqrt(cell.level * (1.0 - cell.level) / nok);
    cell.coverage = 1.0 - cell.level;
    cell.cov_se = cell.level_se;
    double mean = 0.0;
    for (double v : lengths) mean += v;
    mean /= nok;
    cell.avg_length = mean;
    double ss = 0.0;
    for (double v : lengths) ss += (v - mean) * (v - mean);
    const double sd = lengths.size() > 1 ? std::sqrt(ss / (nok - 1.0)) : 0.0;
    cell.len_se = sd / std::sqrt(nok);
  }
  if (!overflow.empty()) throw SimulationFailure("too many failed replications: " + overflow);

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

void write_experiment_csv(std::ostream& out, const ExperimentSpec& spec,
                          const ExperimentResult& result) {
  out << "scenario,s,n,method,K,a,coverage,cov_se,avg_length,len_se,level,level_se,n_mc,"
         "failures\n";
  const std::size_t k_col = spec.method == Method::lrt_ss ? spec.K : 1;
  for (const CellResult& cell : result.cells) {
    out << to_string(spec.scenario) << ',' << format_double(spec.dgp.s) << ',' << spec.dgp.n
        << ',' << to_string(spec.method) << ',' << k_col << ',' << format_double(cell.a) << ','
        << format_double(cell.coverage) << ',' << format_double(cell.cov_se) << ','
        << format_double(cell.avg_length) << ',' << format_double(cell.len_se) << ','
        << format_double(cell.level) << ',' << format_double(cell.level_se) << ','
        << result.n_mc << ',' << cell.failures << '\n';
  }
}

}  // namespace drlrt
