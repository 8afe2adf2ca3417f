// Command-line driver tying the pieces together: CSV ingestion, the plain and
// cross-fit test/CI pipelines, reference-quantile simulation, pseudo-outcome
// export, and the Monte Carlo experiment harness.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drlrt/crossfit.hpp"
#include "drlrt/dataset.hpp"
#include "drlrt/errors.hpp"
#include "drlrt/harness.hpp"
#include "drlrt/io.hpp"
#include "drlrt/limit_dist.hpp"
#include "drlrt/lrt.hpp"
#include "drlrt/nuisance.hpp"
#include "drlrt/pseudo.hpp"
#include "drlrt/rng.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace drlrt;

constexpr const char* kVersion = "drlrt 0.1.0";
constexpr double kTableTolerance = 0.08;

// Flag-combination problems; mapped to exit 1 like parser errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t seed_from_env() {
  const char* env = std::getenv("DRLRT_SEED");
  if (env == nullptr || *env == '\0') return 0;
  if (*env == '-') throw SchemaMismatch("DRLRT_SEED must be a nonnegative integer, got '" +
                                        std::string(env) + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0') {
    throw SchemaMismatch("DRLRT_SEED is not an unsigned integer: '" + std::string(env) + "'");
  }
  return value;
}

// ---------------------------------------------------------------------------
// Shared option bundles

struct DataArgs {
  std::string input;
  std::string y_col = "y";
  std::string a_col = "a";
  std::string l_prefix = "l";
};

struct NuisanceArgs {
  std::string choice = "fit";  // fit | identity | external
  std::string outcome = "rich";
  std::string propensity = "linear-l";
  std::optional<double> sigma2;
  double truncation = 0.01;
  std::string file;       // external: row-aligned table
  std::string mu_matrix;  // external: optional n x n companion
};

void add_data_options(CLI::App* sub, DataArgs& args) {
  sub->add_option("--input", args.input, "input CSV with a header row")->required();
  sub->add_option("--y-col", args.y_col, "response column name")->capture_default_str();
  sub->add_option("--a-col", args.a_col, "treatment column name")->capture_default_str();
  sub->add_option("--l-prefix", args.l_prefix,
                  "confounder column prefix (columns <prefix>1..<prefix>d)")
      ->capture_default_str();
}

void add_nuisance_options(CLI::App* sub, NuisanceArgs& args) {
  sub->add_option("--nuisance", args.choice, "nuisance source")
      ->check(CLI::IsMember({"fit", "identity", "external"}))
      ->capture_default_str();
  sub->add_option("--outcome", args.outcome, "outcome regression design (fit)")
      ->check(CLI::IsMember({"rich", "intercept-l1"}))
      ->capture_default_str();
  sub->add_option("--propensity", args.propensity, "treatment model design (fit)")
      ->check(CLI::IsMember({"linear-l", "intercept-l1"}))
      ->capture_default_str();
  sub->add_option("--sigma2", args.sigma2,
                  "fixed treatment-model variance (estimated when absent)");
  sub->add_option("--truncation", args.truncation, "propensity density floor")
      ->capture_default_str();
  sub->add_option("--nuisance-file", args.file, "external nuisance table (row,mu_ii,g_ii,mbar)");
  sub->add_option("--mu-matrix", args.mu_matrix, "external n x n mu table (headerless)");
}

Dataset load_dataset(const DataArgs& args) {
  if (args.y_col == "y" && args.a_col == "a" && args.l_prefix == "l") {
    return read_dataset_csv(args.input);
  }
  if (args.y_col == args.a_col) {
    throw UsageError("--y-col and --a-col must name different columns");
  }
  const CsvTable t = read_csv(args.input);
  const std::size_t yc = t.column(args.y_col);
  const std::size_t ac = t.column(args.a_col);
  std::vector<std::size_t> lc;
  while (t.has_column(args.l_prefix + std::to_string(lc.size() + 1))) {
    lc.push_back(t.column(args.l_prefix + std::to_string(lc.size() + 1)));
  }
  if (t.cols() != lc.size() + 2) {
    for (const std::string& name : t.header) {
      bool known = name == args.y_col || name == args.a_col;
      for (std::size_t j = 0; !known && j < lc.size(); ++j) {
        known = name == args.l_prefix + std::to_string(j + 1);
      }
      if (!known) {
        throw SchemaMismatch(args.input + ": unexpected column '" + name + "'");
      }
    }
  }
  Dataset data;
  data.d = lc.size();
  data.a.resize(t.rows);
  data.y.resize(t.rows);
  data.l.resize(t.rows * lc.size());
  for (std::size_t r = 0; r < t.rows; ++r) {
    data.y[r] = t.at(r, yc);
    data.a[r] = t.at(r, ac);
    for (std::size_t j = 0; j < lc.size(); ++j) data.l[r * data.d + j] = t.at(r, lc[j]);
  }
  data.validate();
  return data;
}

NuisanceSpec spec_from(const NuisanceArgs& args) {
  NuisanceSpec spec;
  spec.outcome = args.outcome == "rich" ? OutcomeSpec::rich : OutcomeSpec::intercept_l1;
  spec.propensity =
      args.propensity == "linear-l" ? PropensitySpec::linear_l : PropensitySpec::intercept_l1;
  spec.sigma2 = args.sigma2;
  spec.truncation_floor = args.truncation;
  return spec;
}

NuisanceModel build_model(const Dataset& data, const NuisanceArgs& args) {
  if (args.choice == "identity") return NuisanceModel{identity_nuisance(data.n())};
  if (args.choice == "external") {
    if (args.file.empty()) throw UsageError("--nuisance external requires --nuisance-file");
    return NuisanceModel{load_external_nuisance(args.file, args.mu_matrix)};
  }
  return NuisanceModel{fit_nuisance(data, spec_from(args), data)};
}

Direction parse_direction(const std::string& name) {
  return name == "decreasing" ? Direction::decreasing : Direction::increasing;
}

QuantilePolicy resolve_policy(const std::string& flag, bool needs_simulation) {
  if (flag == "table") return QuantilePolicy::table;
  if (flag == "simulate") return QuantilePolicy::simulate;
  if (flag == "table-then-simulate") return QuantilePolicy::table_then_simulate;
  return needs_simulation ? QuantilePolicy::simulate : QuantilePolicy::table;
}

std::string policy_name(QuantilePolicy policy) {
  switch (policy) {
    case QuantilePolicy::table: return "table";
    case QuantilePolicy::simulate: return "simulate";
    case QuantilePolicy::table_then_simulate: return "table-then-simulate";
  }
  return "?";
}

// kernel when fitting or reading tables, rice for the plain monotone
// regression on (a, y); an explicit --variance wins either way.
VarianceMode resolve_variance(const std::string& flag, const std::string& nuisance) {
  if (flag == "kernel") return VarianceMode::kernel;
  if (flag == "rice") return VarianceMode::rice;
  return nuisance == "identity" ? VarianceMode::rice : VarianceMode::kernel;
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaMismatch("cannot open output file: " + path);
  out << content;
  out.flush();
  if (!out) throw SchemaMismatch("failed writing output file: " + path);
}

json finite_or_null(double value) {
  return std::isfinite(value) ? json(value) : json(nullptr);
}

json optional_or_null(const std::optional<double>& value) {
  return value.has_value() ? json(*value) : json(nullptr);
}

// Fixed result schema; every key present, absent values null.
json result_schema() {
  json j;
  for (const char* key : {"a0", "t0", "alpha", "beta_bound", "s_n", "kappa_hat", "q_crit",
                          "reject", "lambda_hat", "ci_lower", "ci_upper", "mode", "n",
                          "bandwidth", "seed"}) {
    j[key] = nullptr;
  }
  return j;
}

void emit_manifest(const json& m) { std::cerr << m.dump() << "\n"; }

json manifest_common(const char* command) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  return m;
}

void manifest_add_data(json& m, const DataArgs& d) {
  m["input"] = d.input;
  m["y_col"] = d.y_col;
  m["a_col"] = d.a_col;
  m["l_prefix"] = d.l_prefix;
}

void manifest_add_nuisance(json& m, const NuisanceArgs& n) {
  m["nuisance"] = n.choice;
  m["outcome"] = n.outcome;
  m["propensity"] = n.propensity;
  m["sigma2"] = optional_or_null(n.sigma2);
  m["truncation"] = n.truncation;
  m["nuisance_file"] = n.file;
  m["mu_matrix"] = n.mu_matrix;
}

// ---------------------------------------------------------------------------
// test / ci

struct InferenceArgs {
  DataArgs data;
  NuisanceArgs nuisance;
  double a0 = 0.0;
  double t0 = 0.0;  // test only
  double alpha = 0.10;
  double beta_bound = 5.0;
  std::size_t K = 1;
  std::string direction = "increasing";
  std::string variance = "auto";
  std::optional<double> bandwidth;
  std::string policy = "auto";
  std::size_t n_mc = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out;
  // ci only
  std::size_t grid_points = 201;
  unsigned max_doublings = 8;
  double refine_tol = 1e-4;
};

void add_inference_options(CLI::App* sub, InferenceArgs& args, bool with_t0) {
  add_data_options(sub, args.data);
  add_nuisance_options(sub, args.nuisance);
  sub->add_option("--a0", args.a0, "treatment value under study")->required();
  if (with_t0) sub->add_option("--t0", args.t0, "null value for theta(a0)")->required();
  sub->add_option("--alpha", args.alpha, "test level / one minus CI level")
      ->capture_default_str();
  sub->add_option("--beta", args.beta_bound, "smoothness bound")->capture_default_str();
  sub->add_option("--K", args.K, "folds; 1 = no sample splitting")->capture_default_str();
  sub->add_option("--direction", args.direction, "monotonicity direction")
      ->check(CLI::IsMember({"increasing", "decreasing"}))
      ->capture_default_str();
  sub->add_option("--variance", args.variance, "variance estimator at a0")
      ->check(CLI::IsMember({"auto", "kernel", "rice"}))
      ->capture_default_str();
  sub->add_option("--bandwidth", args.bandwidth, "kernel bandwidth override");
  sub->add_option("--policy", args.policy, "critical value source")
      ->check(CLI::IsMember({"auto", "table", "simulate", "table-then-simulate"}))
      ->capture_default_str();
  sub->add_option("--n-mc", args.n_mc, "reference-simulation draws")->capture_default_str();
  sub->add_option("--threads", args.threads, "worker cap (never changes results)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  sub->add_option("--out", args.out, "write the JSON result here instead of stdout");
}

json inference_manifest(const char* command, const InferenceArgs& a, bool with_t0,
                        QuantilePolicy policy) {
  json m = manifest_common(command);
  manifest_add_data(m, a.data);
  manifest_add_nuisance(m, a.nuisance);
  m["a0"] = a.a0;
  if (with_t0) m["t0"] = a.t0;
  m["alpha"] = a.alpha;
  m["beta_bound"] = a.beta_bound;
  m["K"] = a.K;
  m["direction"] = a.direction;
  m["variance"] = a.variance;
  m["bandwidth"] = optional_or_null(a.bandwidth);
  m["policy"] = policy_name(policy);
  m["n_mc"] = a.n_mc;
  m["seed"] = a.seed;
  m["threads"] = a.threads;
  if (!with_t0) {
    m["grid_points"] = a.grid_points;
    m["max_doublings"] = a.max_doublings;
    m["refine_tol"] = a.refine_tol;
  }
  return m;
}

void require_fit_for_folds(const InferenceArgs& args) {
  if (args.K > 1 && args.nuisance.choice != "fit") {
    throw EvaluationUnavailable("sample splitting refits the nuisance per fold; '" +
                                args.nuisance.choice + "' tables cannot be cross-fit");
  }
}

int cmd_test(const InferenceArgs& args) {
  const Dataset data = load_dataset(args.data);
  require_fit_for_folds(args);
  const QuantilePolicy policy = resolve_policy(args.policy, args.K > 1);
  LimitSimConfig qcfg;
  qcfg.n_mc = args.n_mc;
  qcfg.seed = args.seed;
  QuantileSource quantiles(policy, qcfg, args.threads);
  const bool seeded = policy != QuantilePolicy::table || args.K > 1;

  json j = result_schema();
  if (args.K <= 1) {
    const NuisanceModel model = build_model(data, args.nuisance);
    TestOptions opt;
    opt.alpha = args.alpha;
    opt.beta_bound = args.beta_bound;
    opt.direction = parse_direction(args.direction);
    opt.variance = resolve_variance(args.variance, args.nuisance.choice);
    opt.mode = args.nuisance.choice == "identity" ? AnalysisMode::noncausal
                                                  : AnalysisMode::causal;
    opt.bandwidth = args.bandwidth;
    opt.with_p_value = policy != QuantilePolicy::table;
    opt.threads = args.threads;
    const LrtResult res = run_test(data, model, args.a0, args.t0, opt, quantiles);
    j["a0"] = res.a0;
    j["t0"] = res.t0;
    j["alpha"] = res.alpha;
    j["beta_bound"] = res.beta_bound;
    j["s_n"] = res.s_n;
    j["kappa_hat"] = res.kappa_hat;
    j["q_crit"] = res.q_crit;
    j["reject"] = res.reject;
    j["lambda_hat"] = res.lambda_hat;
    j["mode"] = res.mode == AnalysisMode::causal ? "causal" : "noncausal";
    j["n"] = res.n;
    j["bandwidth"] = optional_or_null(res.bandwidth);
    if (res.p_value) {
      std::cerr << "p_value = " << format_double(*res.p_value) << " (mc se "
                << format_double(*res.p_value_se) << ")\n";
    }
  } else {
    CrossfitOptions opt;
    opt.alpha = args.alpha;
    opt.beta_bound = args.beta_bound;
    opt.K = args.K;
    opt.fold_seed = args.seed;
    opt.direction = parse_direction(args.direction);
    opt.variance = resolve_variance(args.variance, args.nuisance.choice);
    opt.bandwidth = args.bandwidth;
    opt.threads = args.threads;
    const CrossfitResult res =
        crossfit_test(data, spec_from(args.nuisance), args.a0, args.t0, opt, quantiles);
    j["a0"] = res.a0;
    j["t0"] = res.t0;
    j["alpha"] = res.alpha;
    j["beta_bound"] = res.beta_bound;
    j["s_n"] = res.s_bar;
    j["kappa_hat"] = res.kappa_bar;
    j["q_crit"] = res.q_crit;
    j["reject"] = res.reject;
    j["mode"] = "causal";
    j["n"] = res.n;
    j["bandwidth"] = optional_or_null(args.bandwidth);
    j["K"] = res.K;
    json folds = json::array();
    for (const FoldStats& f : res.per_fold) {
      json fj;
      fj["s_n"] = f.s_n;
      fj["kappa_hat"] = f.kappa_hat;
      fj["lambda_hat"] = f.lambda_hat;
      fj["theta_hat_a0"] = f.theta_hat_a0;
      fj["n_k"] = f.n_k;
      fj["bandwidth"] = f.bandwidth;
      folds.push_back(std::move(fj));
    }
    j["per_fold"] = std::move(folds);
  }
  j["seed"] = seeded ? json(args.seed) : json(nullptr);
  write_output(args.out, j.dump(2) + "\n");
  emit_manifest(inference_manifest("test", args, true, policy));
  return 0;
}

int cmd_ci(const InferenceArgs& args) {
  const Dataset data = load_dataset(args.data);
  require_fit_for_folds(args);
  const QuantilePolicy policy = resolve_policy(args.policy, args.K > 1);
  LimitSimConfig qcfg;
  qcfg.n_mc = args.n_mc;
  qcfg.seed = args.seed;
  QuantileSource quantiles(policy, qcfg, args.threads);
  const bool seeded = policy != QuantilePolicy::table || args.K > 1;

  CiResult res;
  std::string mode = "causal";
  if (args.K <= 1) {
    const NuisanceModel model = build_model(data, args.nuisance);
    CiOptions opt;
    opt.alpha = args.alpha;
    opt.beta_bound = args.beta_bound;
    opt.direction = parse_direction(args.direction);
    opt.variance = resolve_variance(args.variance, args.nuisance.choice);
    opt.bandwidth = args.bandwidth;
    opt.threads = args.threads;
    opt.grid_points = args.grid_points;
    opt.max_doublings = args.max_doublings;
    opt.refine_tol = args.refine_tol;
    if (args.nuisance.choice == "identity") mode = "noncausal";
    res = confidence_interval(data, model, args.a0, opt, quantiles);
  } else {
    CrossfitOptions opt;
    opt.alpha = args.alpha;
    opt.beta_bound = args.beta_bound;
    opt.K = args.K;
    opt.fold_seed = args.seed;
    opt.direction = parse_direction(args.direction);
    opt.variance = resolve_variance(args.variance, args.nuisance.choice);
    opt.bandwidth = args.bandwidth;
    opt.threads = args.threads;
    opt.grid_points = args.grid_points;
    opt.max_doublings = args.max_doublings;
    opt.refine_tol = args.refine_tol;
    res = crossfit_ci(data, spec_from(args.nuisance), args.a0, opt, quantiles);
  }

  json j = result_schema();
  j["a0"] = res.a0;
  j["alpha"] = res.alpha;
  j["beta_bound"] = args.beta_bound;
  j["ci_lower"] = res.empty ? json(nullptr) : finite_or_null(res.lower);
  j["ci_upper"] = res.empty ? json(nullptr) : finite_or_null(res.upper);
  j["mode"] = mode;
  j["n"] = data.n();
  j["bandwidth"] = optional_or_null(args.bandwidth);
  j["seed"] = seeded ? json(args.seed) : json(nullptr);
  if (args.K > 1) j["K"] = args.K;
  std::cerr << "theta_hat(a0) = " << format_double(res.theta_hat_a0) << ", "
            << res.grid_points_scanned << " statistic evaluations"
            << (res.refined ? "" : ", endpoints not refined") << "\n";
  if (res.empty) std::cerr << "note: every candidate rejected; interval empty\n";
  if (res.lower_unbounded) std::cerr << "note: lower endpoint unbounded (null in JSON)\n";
  if (res.upper_unbounded) std::cerr << "note: upper endpoint unbounded (null in JSON)\n";
  write_output(args.out, j.dump(2) + "\n");
  emit_manifest(inference_manifest("ci", args, false, policy));
  return 0;
}

// ---------------------------------------------------------------------------
// critvals

struct CritvalArgs {
  std::vector<double> betas = {0.01, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 5.0};
  std::vector<double> alphas = {0.85, 0.90, 0.95, 0.975, 0.99};
  std::string policy = "simulate";
  std::size_t n_mc = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool check_paper = false;
  std::string out;
};

int cmd_critvals(const CritvalArgs& args) {
  for (double b : args.betas) {
    if (!(b > 0.0)) throw SchemaMismatch("beta must be positive, got " + format_double(b));
  }
  for (double a : args.alphas) {
    if (!(a > 0.0 && a < 1.0)) {
      throw SchemaMismatch("alpha must lie in (0, 1), got " + format_double(a));
    }
  }
  if (args.policy == "simulate" && args.n_mc < 2) {
    throw SchemaMismatch("--n-mc must be at least 2 for the simulate policy");
  }

  struct Row {
    double beta, alpha, q, se;
    std::size_t n_mc;
  };
  std::vector<Row> rows;
  if (args.policy == "table") {
    const CriticalValueTable& table = CriticalValueTable::published();
    for (double beta : args.betas) {
      for (double alpha : args.alphas) {
        rows.push_back({beta, alpha, table.lookup(alpha, beta), 0.0, 0});
      }
    }
  } else {
    for (double beta : args.betas) {
      LimitSimConfig cfg;
      cfg.beta = beta;
      cfg.n_mc = args.n_mc;
      cfg.seed = args.seed;
      const DbetaQuantiles draws = simulate_dbeta(cfg, args.threads);
      for (double alpha : args.alphas) {
        rows.push_back({beta, alpha, draws.quantile(alpha), draws.quantile_se(alpha),
                        args.n_mc});
      }
    }
  }

  std::string csv = "beta,alpha,q,mc_se,n_mc,seed\n";
  for (const Row& r : rows) {
    csv += format_double(r.beta) + "," + format_double(r.alpha) + "," + format_double(r.q) +
           "," + format_double(r.se) + "," + std::to_string(r.n_mc) + "," +
           std::to_string(args.seed) + "\n";
  }
  write_output(args.out, csv);

  json m = manifest_common("critvals");
  m["betas"] = args.betas;
  m["alphas"] = args.alphas;
  m["policy"] = args.policy;
  m["n_mc"] = args.n_mc;
  m["seed"] = args.seed;
  m["threads"] = args.threads;
  m["check_paper"] = args.check_paper;
  emit_manifest(m);

  if (args.check_paper) {
    const CriticalValueTable& table = CriticalValueTable::published();
    std::size_t checked = 0;
    double worst = 0.0;
    std::vector<std::string> offenders;
    for (const Row& r : rows) {
      if (!table.has_alpha(r.alpha)) continue;
      bool beta_in_table = false;
      for (double b : table.betas()) beta_in_table = beta_in_table || b == r.beta;
      if (!beta_in_table) continue;
      const double dev = std::abs(r.q - table.lookup(r.alpha, r.beta));
      ++checked;
      worst = std::max(worst, dev);
      if (dev > kTableTolerance) {
        offenders.push_back("beta=" + format_double(r.beta) + " alpha=" +
                            format_double(r.alpha) + " deviates by " + format_double(dev));
      }
    }
    if (checked == 0) {
      std::cerr << "check-paper: no requested cell is in the embedded table\n";
      return 3;
    }
    std::cerr << "check-paper: " << checked << " cells, max deviation " << format_double(worst)
              << " (tolerance " << format_double(kTableTolerance) << ")\n";
    for (const std::string& line : offenders) std::cerr << "check-paper: " << line << "\n";
    if (!offenders.empty()) return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scenario = "model1-bothwell";
  std::optional<double> s;  // external scenario only
  std::size_t n = 1000;
  std::size_t n_mc = 300;
  std::string method = "lrt";
  std::size_t K = 2;
  double alpha = 0.10;
  double beta_bound = 5.0;
  std::vector<double> eval_points;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string policy = "auto";
  std::size_t q_n_mc = 10000;
  std::string external_dir;
  std::string export_dir;
  bool smoke = false;
  std::string out;
};

std::pair<Scenario, double> parse_scenario(const std::string& name,
                                           const std::optional<double>& s_flag) {
  if (name == "external") return {Scenario::external, s_flag.value_or(0.1)};
  static const std::map<std::string, std::pair<Scenario, double>> named = {
      {"model1-bothwell", {Scenario::both_well, 0.1}},
      {"model1-mumis", {Scenario::pi_well_mu_mis, 0.1}},
      {"model1-pimis", {Scenario::mu_well_pi_mis, 0.1}},
      {"model2-bothwell", {Scenario::both_well, 0.2}},
      {"model2-mumis", {Scenario::pi_well_mu_mis, 0.2}},
      {"model2-pimis", {Scenario::mu_well_pi_mis, 0.2}},
  };
  const auto it = named.find(name);
  if (it == named.end()) {
    throw SchemaMismatch("unknown scenario '" + name +
                         "' (expected model{1,2}-{bothwell,mumis,pimis} or external)");
  }
  if (s_flag.has_value()) throw UsageError("--s applies only to the external scenario");
  return it->second;
}

int cmd_simulate(const SimulateArgs& args) {
  const auto [scenario, s] = parse_scenario(args.scenario, args.s);
  ExperimentSpec spec;
  spec.dgp.s = s;
  spec.dgp.n = args.n;
  spec.method = method_from_string(args.method == "lrt-ss" ? "lrt_ss" : args.method);
  spec.scenario = scenario;
  spec.alpha = args.alpha;
  spec.beta_bound = args.beta_bound;
  spec.K = args.K;
  if (!args.eval_points.empty()) spec.eval_points = args.eval_points;
  spec.n_mc = args.n_mc;
  spec.base_seed = args.seed;
  spec.threads = args.threads;
  spec.external_dir = args.external_dir;
  spec.export_dir = args.export_dir;
  if (args.smoke) {
    spec.n_mc = 2;
    spec.dgp.n = 200;
  }

  const QuantilePolicy policy = resolve_policy(args.policy, spec.method == Method::lrt_ss);
  LimitSimConfig qcfg;
  qcfg.n_mc = args.q_n_mc;
  qcfg.seed = mix64(spec.base_seed);
  QuantileSource quantiles(policy, qcfg, args.threads);

  const ExperimentResult result = run_experiment(spec, quantiles);
  std::ostringstream csv;
  write_experiment_csv(csv, spec, result);
  write_output(args.out, csv.str());

  json m = manifest_common("simulate");
  m["scenario"] = args.scenario;
  m["s"] = spec.dgp.s;
  m["n"] = spec.dgp.n;
  m["method"] = to_string(spec.method);
  m["K"] = spec.K;
  m["alpha"] = spec.alpha;
  m["beta_bound"] = spec.beta_bound;
  m["eval_points"] = spec.eval_points;
  m["n_mc"] = spec.n_mc;
  m["base_seed"] = spec.base_seed;
  m["threads"] = spec.threads;
  m["policy"] = policy_name(policy);
  m["q_n_mc"] = args.q_n_mc;
  m["quantile_seed"] = qcfg.seed;
  m["external_dir"] = spec.external_dir;
  m["export_dir"] = spec.export_dir;
  m["smoke"] = args.smoke;
  m["wall_seconds"] = result.wall_seconds;
  emit_manifest(m);
  return 0;
}

// ---------------------------------------------------------------------------
// pseudo

struct PseudoArgs {
  DataArgs data;
  NuisanceArgs nuisance;
  unsigned threads = 1;
  std::string out;
};

int cmd_pseudo(const PseudoArgs& args) {
  const Dataset data = load_dataset(args.data);
  const NuisanceModel model = build_model(data, args.nuisance);
  const PseudoOutcomes pseudo = compute_pseudo_outcomes(data, model, args.threads);
  const ExternalNuisance table =
      model.is_external() ? model.external() : externalize_nuisance(model.parametric(), data);

  std::ostringstream out;
  out << "row,a,y,xi,mu_ii,g_ii,mbar\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    write_csv_row(out, {static_cast<double>(i), data.a[i], data.y[i], pseudo.xi[i],
                        table.mu_ii[i], table.g_ii[i], table.mbar[i]});
  }
  write_output(args.out, out.str());

  json m = manifest_common("pseudo");
  manifest_add_data(m, args.data);
  manifest_add_nuisance(m, args.nuisance);
  m["n"] = data.n();
  m["d"] = data.d;
  m["threads"] = args.threads;
  m["source"] = pseudo.source;
  emit_manifest(m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust likelihood-ratio tests and confidence intervals for a "
               "monotone dose-response curve at a point"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  InferenceArgs test_args;
  CLI::App* test_cmd = app.add_subcommand("test", "test theta(a0) = t0");
  add_inference_options(test_cmd, test_args, true);
  CLI::Option* test_seed =
      test_cmd->add_option("--seed", test_args.seed, "reference-simulation / fold seed");

  InferenceArgs ci_args;
  CLI::App* ci_cmd = app.add_subcommand("ci", "confidence interval for theta(a0)");
  add_inference_options(ci_cmd, ci_args, false);
  ci_cmd->add_option("--grid-points", ci_args.grid_points, "odd inversion grid size")
      ->capture_default_str();
  ci_cmd->add_option("--max-doublings", ci_args.max_doublings, "half-width doubling cap")
      ->capture_default_str();
  ci_cmd->add_option("--refine-tol", ci_args.refine_tol,
                     "endpoint bisection tolerance, relative to the half-width")
      ->capture_default_str();
  CLI::Option* ci_seed =
      ci_cmd->add_option("--seed", ci_args.seed, "reference-simulation / fold seed");

  CritvalArgs crit_args;
  CLI::App* crit_cmd = app.add_subcommand("critvals", "reference-distribution quantiles");
  crit_cmd->add_option("--beta", crit_args.betas, "smoothness bounds")
      ->delimiter(',')
      ->capture_default_str();
  crit_cmd->add_option("--alpha", crit_args.alphas, "quantile levels")
      ->delimiter(',')
      ->capture_default_str();
  crit_cmd->add_option("--policy", crit_args.policy, "quantile source")
      ->check(CLI::IsMember({"simulate", "table"}))
      ->capture_default_str();
  crit_cmd->add_option("--n-mc", crit_args.n_mc, "draws per beta")->capture_default_str();
  crit_cmd->add_option("--threads", crit_args.threads, "worker cap (never changes results)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  crit_cmd->add_flag("--check-paper", crit_args.check_paper,
                     "compare against the embedded table; exit 3 beyond the tolerance");
  crit_cmd->add_option("--out", crit_args.out, "write the CSV here instead of stdout");
  CLI::Option* crit_seed =
      crit_cmd->add_option("--seed", crit_args.seed, "simulation seed");

  SimulateArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "coverage/length/level experiment");
  sim_cmd->add_option("--scenario", sim_args.scenario,
                      "model{1,2}-{bothwell,mumis,pimis} or external")
      ->capture_default_str();
  sim_cmd->add_option("--s", sim_args.s, "confounding strength (external scenario)");
  sim_cmd->add_option("--n", sim_args.n, "rows per replication")->capture_default_str();
  sim_cmd->add_option("--n-mc", sim_args.n_mc, "replications")->capture_default_str();
  sim_cmd->add_option("--method", sim_args.method, "plain fit or cross-fit")
      ->check(CLI::IsMember({"lrt", "lrt-ss", "lrt_ss"}))
      ->capture_default_str();
  sim_cmd->add_option("--K", sim_args.K, "folds (lrt-ss)")->capture_default_str();
  sim_cmd->add_option("--alpha", sim_args.alpha, "test level")->capture_default_str();
  sim_cmd->add_option("--beta", sim_args.beta_bound, "smoothness bound")
      ->capture_default_str();
  sim_cmd->add_option("--a0", sim_args.eval_points,
                      "evaluation points (default 0,1,1.5,3,7,11,15)")
      ->delimiter(',');
  sim_cmd->add_option("--threads", sim_args.threads, "worker cap (never changes results)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  sim_cmd->add_option("--policy", sim_args.policy, "critical value source")
      ->check(CLI::IsMember({"auto", "table", "simulate", "table-then-simulate"}))
      ->capture_default_str();
  sim_cmd->add_option("--q-n-mc", sim_args.q_n_mc, "reference-simulation draws")
      ->capture_default_str();
  sim_cmd->add_option("--external-dir", sim_args.external_dir,
                      "directory with nuisance_<r>.csv tables (external scenario)");
  sim_cmd->add_option("--export-dir", sim_args.export_dir,
                      "write each replication's data_<r>.csv here");
  sim_cmd->add_flag("--smoke", sim_args.smoke, "quick run: n_mc=2, n=200");
  sim_cmd->add_option("--out", sim_args.out, "write the CSV here instead of stdout");
  CLI::Option* sim_seed =
      sim_cmd->add_option("--seed", sim_args.seed, "base seed for replications");

  PseudoArgs pseudo_args;
  CLI::App* pseudo_cmd =
      app.add_subcommand("pseudo", "emit pseudo-outcomes and fitted nuisances as CSV");
  add_data_options(pseudo_cmd, pseudo_args.data);
  add_nuisance_options(pseudo_cmd, pseudo_args.nuisance);
  pseudo_cmd->add_option("--threads", pseudo_args.threads,
                         "worker cap (never changes results)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  pseudo_cmd->add_option("--out", pseudo_args.out, "write the CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const std::uint64_t env_seed = seed_from_env();
    if (test_seed->count() == 0) test_args.seed = env_seed;
    if (ci_seed->count() == 0) ci_args.seed = env_seed;
    if (crit_seed->count() == 0) crit_args.seed = env_seed;
    if (sim_seed->count() == 0) sim_args.seed = env_seed;

    if (app.got_subcommand(test_cmd)) return cmd_test(test_args);
    if (app.got_subcommand(ci_cmd)) return cmd_ci(ci_args);
    if (app.got_subcommand(crit_cmd)) return cmd_critvals(crit_args);
    if (app.got_subcommand(sim_cmd)) return cmd_simulate(sim_args);
    if (app.got_subcommand(pseudo_cmd)) return cmd_pseudo(pseudo_args);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::data ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
