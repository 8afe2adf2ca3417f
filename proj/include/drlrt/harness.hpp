#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "drlrt/dataset.hpp"
#include "drlrt/limit_dist.hpp"
#include "drlrt/nuisance.hpp"
#include "drlrt/rng.hpp"

namespace drlrt {

struct DgpConfig {
  double s = 0.1;        // confounding strength
  std::size_t n = 1000;  // rows per replication
  std::uint64_t seed = 0;
};

/// The dose-response curve the generator below integrates to: a quartic ramp
/// that saturates beyond |a| = 1.5 plus a shallow cubic, decreasing on the
/// observed treatment range.
double true_theta(double a);

/// One synthetic dataset: four standard normal confounders, a treatment
/// N(7.5 + s*(L1 + L2 - L3 - L4), 7.5^2), and a response N(mu(L, A), 0.5^2)
/// whose confounder-average at fixed a is true_theta(a). Exactly six normal
/// draws per row, ordered L1..L4, A, Y, so a replication is reproducible
/// from its StreamRng alone.
Dataset draw_dataset(const DgpConfig& cfg, StreamRng& rng);
/// Convenience overload seeding StreamRng(cfg.seed, 0).
Dataset draw_dataset(const DgpConfig& cfg);

/// Nuisance configurations exercised by the experiments: both models well
/// specified, one of them deliberately coarse (confounder l1 only), or
/// tables read from files.
enum class Scenario { both_well, mu_well_pi_mis, pi_well_mu_mis, external };

/// lrt fits the nuisance on the full sample; lrt_ss cross-fits over K folds.
enum class Method { lrt, lrt_ss };

std::string to_string(Scenario sc);
std::string to_string(Method m);
Scenario scenario_from_string(const std::string& name);
Method method_from_string(const std::string& name);

/// Fitting recipe for a parametric scenario (throws SchemaMismatch for
/// external, whose tables are not fitted). sigma2 is the fixed propensity
/// variance; the generator's true value is 7.5^2.
NuisanceSpec scenario_spec(Scenario sc, double sigma2 = 56.25);

struct ExperimentSpec {
  DgpConfig dgp;
  Method method = Method::lrt;
  Scenario scenario = Scenario::both_well;
  double alpha = 0.10;
  double beta_bound = 5.0;
  std::size_t K = 2;  // folds, lrt_ss only
  std::vector<double> eval_points = {0.0, 1.0, 1.5, 3.0, 7.0, 11.0, 15.0};
  std::size_t n_mc = 100;
  std::uint64_t base_seed = 0;
  unsigned threads = 1;
  std::string external_dir;  // Scenario::external: reads nuisance_<r>.csv here
  std::string export_dir;    // when set, writes data_<r>.csv per replication
};

/// Monte Carlo tallies for one evaluation point. level is the rejection rate
/// of the true value and coverage its complement (the CI inverts the same
/// test), both over the replications that completed; avg_length is infinite
/// when any interval was unbounded.
struct CellResult {
  double a = 0.0;
  double coverage = 0.0;
  double cov_se = 0.0;
  double avg_length = 0.0;
  double len_se = 0.0;
  double level = 0.0;
  double level_se = 0.0;
  std::size_t n_ok = 0;
  std::size_t failures = 0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;  // eval_points order
  std::size_t n_mc = 0;           // requested replications
  double wall_seconds = 0.0;
};

/// Runs n_mc replications, replication r drawing its data from
/// StreamRng(base_seed, r), and tallies per evaluation point. Replications
/// run in parallel; results are byte-identical across thread counts. Throws
/// SimulationFailure when any cell loses more than 1% of the requested
/// replications to data or numeric errors.
ExperimentResult run_experiment(const ExperimentSpec& spec, QuantileSource& quantiles);

/// CSV: scenario,s,n,method,K,a,coverage,cov_se,avg_length,len_se,level,
/// level_se,n_mc,failures — one row per evaluation point.
void write_experiment_csv(std::ostream& out, const ExperimentSpec& spec,
                          const ExperimentResult& result);

}  // namespace drlrt
