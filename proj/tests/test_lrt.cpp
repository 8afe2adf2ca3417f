#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "drlrt/errors.hpp"
#include "drlrt/limit_dist.hpp"
#include "drlrt/lrt.hpp"
#include "drlrt/nuisance.hpp"
#include "drlrt/pseudo.hpp"
#include "drlrt/rng.hpp"

using namespace drlrt;

namespace {

Dataset plain_dataset(std::vector<double> a, std::vector<double> y) {
  Dataset data;
  data.d = 0;
  data.a = std::move(a);
  data.y = std::move(y);
  return data;
}

NuisanceModel identity_model(std::size_t n) { return NuisanceModel{identity_nuisance(n)}; }

QuantileSource table_source() { return QuantileSource(QuantilePolicy::table, LimitSimConfig{}); }

// Noisy increasing curve with distinct treatments; the workhorse sample.
Dataset noisy_ramp(std::size_t n, double noise_sd, std::uint64_t seed) {
  StreamRng rng(seed, 17);
  std::vector<double> a(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<double>(i) / static_cast<double>(n - 1) * 10.0;
    y[i] = a[i] + noise_sd * rng.normal();
  }
  return plain_dataset(std::move(a), std::move(y));
}

}  // namespace

TEST_SUITE("lrt") {
  TEST_CASE("silverman bandwidth matches the definition") {
    const std::vector<double> a{0.0, 1.0, 2.0, 3.0};
    // 1.06 * sqrt(5/3) * 4^(-1/5)
    CHECK(silverman_bandwidth(a) == doctest::Approx(1.037094286807564).epsilon(1e-12));
    const std::vector<double> flat{2.0, 2.0, 2.0};
    CHECK(silverman_bandwidth(flat) == 0.0);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(silverman_bandwidth(one), TooFewPoints);
  }

  TEST_CASE("difference variance estimator on exact cases") {
    const std::vector<double> flat{3.5, 3.5, 3.5, 3.5};
    CHECK(noncausal_sigma2(flat) == 0.0);
    // Alternating +-c: every squared difference is (2c)^2, so the estimator
    // is exactly 2c^2.
    const std::vector<double> alt{0.75, -0.75, 0.75, -0.75, 0.75};
    CHECK(noncausal_sigma2(alt) == 1.125);
    const std::vector<double> pair{0.0, 1.0};
    CHECK(noncausal_sigma2(pair) == 0.5);
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(noncausal_sigma2(one), TooFewPoints);
  }

  TEST_CASE("statistic on the two-point toy") {
    const PreparedSample prep = prepare_sample(std::vector<double>{1.0, 2.0},
                                               std::vector<double>{0.0, 0.0}, 1.0);
    CHECK(prep.sorted.k0 == 0);
    CHECK(prep.theta_hat_a0 == 0.0);
    const StatisticValue stat = statistic_at(prep, 1.0);
    // Constrained fit is [1, 1]: both residuals move from 0 to 1.
    CHECK(stat.s_n == 2.0);
    CHECK(stat.lambda_hat == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(stat.active);
  }

  TEST_CASE("statistic vanishes when the constraint already holds") {
    const PreparedSample prep = prepare_sample(std::vector<double>{1.0, 2.0, 3.0},
                                               std::vector<double>{0.0, 1.0, 2.0}, 2.0);
    const StatisticValue stat = statistic_at(prep, 1.0);
    CHECK(stat.s_n == 0.0);
    CHECK(stat.lambda_hat == 0.0);
    CHECK(!stat.active);
  }

  TEST_CASE("statistic is nonnegative across random samples and null values") {
    StreamRng rng(20260816, 1);
    for (int rep = 0; rep < 300; ++rep) {
      const std::size_t n = 2 + static_cast<std::size_t>(rng.next_u64() % 59);
      std::vector<double> a(n), xi(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<double>(i);
        xi[i] = rng.normal();
      }
      const double a0 = static_cast<double>(rng.next_u64() % n);
      const PreparedSample prep = prepare_sample(a, xi, a0);
      // The identity between the residual and fitted-value forms is asserted
      // inside the call; a violation would throw.
      const double t0 = prep.theta_hat_a0 + 2.0 * rng.normal();
      const StatisticValue stat = statistic_at(prep, t0);
      CHECK(stat.s_n >= 0.0);
    }
  }

  TEST_CASE("kernel variance reproduces a flat residual field") {
    StreamRng rng(7, 7);
    std::vector<double> a(40), eta_sq(40, 0.04);
    for (auto& v : a) v = rng.normal();
    const VarianceEstimate est = kernel_kappa(a, eta_sq, 0.3, std::nullopt);
    CHECK(est.kappa_hat == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(est.bandwidth == doctest::Approx(silverman_bandwidth(a)).epsilon(1e-15));
    CHECK(est.n_effective > 0.0);
    CHECK(est.n_effective <= 40.0);
  }

  TEST_CASE("kernel variance localizes around the evaluation point") {
    std::vector<double> a, eta_sq;
    for (int i = 0; i < 20; ++i) {
      a.push_back(0.0);
      eta_sq.push_back(1.0);
      a.push_back(10.0);
      eta_sq.push_back(9.0);
    }
    CHECK(kernel_kappa(a, eta_sq, 10.0, 1.0).kappa_hat == doctest::Approx(9.0).epsilon(1e-8));
    CHECK(kernel_kappa(a, eta_sq, 0.0, 1.0).kappa_hat == doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("kernel variance failure modes and floor") {
    const std::vector<double> a{0.0, 1.0};
    const std::vector<double> eta_sq{1.0, 1.0};
    CHECK_THROWS_AS(kernel_kappa(a, eta_sq, 0.5, 0.0), EmptyKernelMass);
    CHECK_THROWS_AS(kernel_kappa(a, eta_sq, 1e8, 1.0), EmptyKernelMass);
    const std::vector<double> short_eta{1.0};
    CHECK_THROWS_AS(kernel_kappa(a, short_eta, 0.5, 1.0), LengthMismatch);
    const std::vector<double> zeros{0.0, 0.0};
    CHECK(kernel_kappa(a, zeros, 0.5, 1.0).kappa_hat == 1e-12);
  }

  TEST_CASE("variance_at dispatches between the two estimators") {
    const Dataset data = noisy_ramp(120, 0.5, 3);
    const PreparedSample prep = prepare_sample(data.a, data.y, 5.0);
    const VarianceEstimate rice = variance_at(prep, 5.0, VarianceMode::rice);
    CHECK(rice.kappa_hat == noncausal_sigma2(prep.sorted.xi));
    CHECK(rice.bandwidth == 0.0);
    CHECK(rice.n_effective == 120.0);
    const VarianceEstimate kern = variance_at(prep, 5.0, VarianceMode::kernel);
    CHECK(kern.kappa_hat > 1e-12);
    CHECK(kern.bandwidth == doctest::Approx(silverman_bandwidth(prep.sorted.a)).epsilon(1e-15));
    // Exactly monotone responses leave no isotonic residual: the kernel
    // estimate hits the floor.
    const PreparedSample clean =
        prepare_sample(std::vector<double>{0.0, 1.0, 2.0, 3.0},
                       std::vector<double>{0.0, 1.0, 2.0, 3.0}, 1.0);
    CHECK(variance_at(clean, 1.0, VarianceMode::kernel).kappa_hat == 1e-12);
  }

  TEST_CASE("run_test accepts the fitted value and rejects distant nulls") {
    const Dataset data = noisy_ramp(200, 0.1, 11);
    const NuisanceModel model = identity_model(200);
    QuantileSource src = table_source();
    TestOptions opt;
    opt.alpha = 0.10;
    opt.beta_bound = 5.0;

    const PreparedSample prep = prepare_sample(data.a, data.y, 5.0);
    const LrtResult at_fit = run_test(data, model, 5.0, prep.theta_hat_a0, opt, src);
    CHECK(at_fit.s_n == 0.0);
    CHECK(!at_fit.reject);
    CHECK(at_fit.q_crit == CriticalValueTable::published().lookup(0.90, 5.0));
    CHECK(at_fit.n == 200);
    CHECK(at_fit.bandwidth.has_value());
    CHECK(!at_fit.p_value.has_value());

    const LrtResult below = run_test(data, model, 5.0, prep.theta_hat_a0 - 3.0, opt, src);
    CHECK(below.reject);
    CHECK(below.s_n > below.kappa_hat * below.q_crit);
    const LrtResult above = run_test(data, model, 5.0, prep.theta_hat_a0 + 3.0, opt, src);
    CHECK(above.reject);

    opt.variance = VarianceMode::rice;
    const LrtResult rice = run_test(data, model, 5.0, prep.theta_hat_a0, opt, src);
    CHECK(!rice.bandwidth.has_value());

    opt.alpha = 1.5;
    CHECK_THROWS_AS(run_test(data, model, 5.0, 5.0, opt, src), SchemaMismatch);
    opt.alpha = 0.10;
    CHECK_THROWS_AS(
        run_test(data, model, std::numeric_limits<double>::quiet_NaN(), 5.0, opt, src),
        SchemaMismatch);
  }

  TEST_CASE("run_test p-value comes only from a simulating source") {
    const Dataset data = noisy_ramp(60, 0.3, 13);
    const NuisanceModel model = identity_model(60);
    TestOptions opt;
    opt.with_p_value = true;

    QuantileSource table = table_source();
    const LrtResult from_table = run_test(data, model, 5.0, 4.0, opt, table);
    CHECK(!from_table.p_value.has_value());

    LimitSimConfig cfg;
    cfg.n_mc = 400;
    cfg.seed = 99;
    QuantileSource sim(QuantilePolicy::simulate, cfg);
    const LrtResult simulated = run_test(data, model, 5.0, 4.0, opt, sim);
    REQUIRE(simulated.p_value.has_value());
    CHECK(*simulated.p_value >= 0.0);
    CHECK(*simulated.p_value <= 1.0);
    REQUIRE(simulated.p_value_se.has_value());
    CHECK(*simulated.p_value_se >= 0.0);
    const DbetaQuantiles* draws = sim.draws_for(0.90, opt.beta_bound, 1);
    REQUIRE(draws != nullptr);
    CHECK(simulated.q_crit == draws->quantile(0.90));
  }

  TEST_CASE("decreasing direction is a reflection of the increasing test") {
    Dataset falling = noisy_ramp(150, 0.4, 5);
    for (double& v : falling.y) v = -v;  // strictly decreasing trend
    Dataset mirrored = falling;
    for (double& v : mirrored.y) v = -v;
    const NuisanceModel model = identity_model(150);
    QuantileSource src = table_source();

    const double t0 = -4.8;
    TestOptions down;
    down.direction = Direction::decreasing;
    TestOptions up;
    const LrtResult dec = run_test(falling, model, 5.0, t0, down, src);
    const LrtResult inc = run_test(mirrored, model, 5.0, -t0, up, src);
    CHECK(dec.s_n == inc.s_n);
    CHECK(dec.kappa_hat == inc.kappa_hat);
    CHECK(dec.reject == inc.reject);
    CHECK(dec.lambda_hat == -inc.lambda_hat);

    CiOptions cdown;
    cdown.direction = Direction::decreasing;
    CiOptions cup;
    const CiResult ci_dec = confidence_interval(falling, model, 5.0, cdown, src);
    const CiResult ci_inc = confidence_interval(mirrored, model, 5.0, cup, src);
    CHECK(ci_dec.lower == -ci_inc.upper);
    CHECK(ci_dec.upper == -ci_inc.lower);
    CHECK(ci_dec.theta_hat_a0 == -ci_inc.theta_hat_a0);
    CHECK(ci_dec.lower_unbounded == ci_inc.upper_unbounded);
    CHECK(ci_dec.upper_unbounded == ci_inc.lower_unbounded);
  }

  TEST_CASE("confidence interval brackets the fit, nests, and matches the test") {
    const Dataset data = noisy_ramp(200, 0.5, 23);
    const NuisanceModel model = identity_model(200);
    QuantileSource src = table_source();
    CiOptions opt;
    opt.alpha = 0.10;

    const CiResult ci = confidence_interval(data, model, 5.0, opt, src);
    CHECK(!ci.empty);
    CHECK(!ci.lower_unbounded);
    CHECK(!ci.upper_unbounded);
    CHECK(ci.refined);
    CHECK(ci.lower <= ci.theta_hat_a0);
    CHECK(ci.theta_hat_a0 <= ci.upper);
    CHECK(ci.grid_points_scanned >= opt.grid_points);

    CiOptions wide = opt;
    wide.alpha = 0.05;
    const CiResult ci05 = confidence_interval(data, model, 5.0, wide, src);
    CHECK(ci05.lower <= ci.lower + 1e-9);
    CHECK(ci.upper <= ci05.upper + 1e-9);

    // Consistency with the test decision on either side of the boundary.
    TestOptions topt;
    topt.alpha = 0.10;
    const double margin = 0.02 * (ci.upper - ci.lower);
    CHECK(run_test(data, model, 5.0, ci.lower - margin, topt, src).reject);
    CHECK(run_test(data, model, 5.0, ci.upper + margin, topt, src).reject);
    CHECK(!run_test(data, model, 5.0, 0.5 * (ci.lower + ci.upper), topt, src).reject);
  }

  TEST_CASE("confidence interval is shift equivariant") {
    const Dataset data = noisy_ramp(150, 0.5, 31);
    Dataset shifted = data;
    for (double& v : shifted.y) v += 3.25;
    const NuisanceModel model = identity_model(150);
    QuantileSource src = table_source();
    CiOptions opt;
    const CiResult base = confidence_interval(data, model, 5.0, opt, src);
    const CiResult moved = confidence_interval(shifted, model, 5.0, opt, src);
    CHECK(moved.theta_hat_a0 == doctest::Approx(base.theta_hat_a0 + 3.25).epsilon(1e-9));
    CHECK(moved.lower == doctest::Approx(base.lower + 3.25).epsilon(1e-9));
    CHECK(moved.upper == doctest::Approx(base.upper + 3.25).epsilon(1e-9));
  }

  TEST_CASE("test and interval scale with the response") {
    const Dataset data = noisy_ramp(150, 0.5, 37);
    Dataset scaled = data;
    for (double& v : scaled.y) v *= 4.0;  // power of two: exact per-value scaling
    const NuisanceModel model = identity_model(150);
    QuantileSource src = table_source();

    TestOptions topt;
    topt.variance = VarianceMode::rice;
    const LrtResult base = run_test(data, model, 5.0, 4.0, topt, src);
    const LrtResult big = run_test(scaled, model, 5.0, 16.0, topt, src);
    CHECK(big.s_n == doctest::Approx(16.0 * base.s_n).epsilon(1e-12));
    CHECK(big.kappa_hat == doctest::Approx(16.0 * base.kappa_hat).epsilon(1e-12));
    CHECK(big.reject == base.reject);

    CiOptions copt;
    copt.variance = VarianceMode::rice;
    const CiResult ci = confidence_interval(data, model, 5.0, copt, src);
    const CiResult ci4 = confidence_interval(scaled, model, 5.0, copt, src);
    CHECK(ci4.lower == doctest::Approx(4.0 * ci.lower).epsilon(1e-9));
    CHECK(ci4.upper == doctest::Approx(4.0 * ci.upper).epsilon(1e-9));
  }

  TEST_CASE("confidence interval is deterministic across thread counts") {
    const Dataset data = noisy_ramp(300, 0.6, 41);
    const NuisanceModel model = identity_model(300);
    QuantileSource src = table_source();
    CiOptions one;
    one.threads = 1;
    CiOptions four;
    four.threads = 4;
    const CiResult a = confidence_interval(data, model, 5.0, one, src);
    const CiResult b = confidence_interval(data, model, 5.0, four, src);
    CHECK(a.lower == b.lower);
    CHECK(a.upper == b.upper);
    CHECK(a.grid_points_scanned == b.grid_points_scanned);
  }

  TEST_CASE("inversion engine refines a quadratic statistic") {
    InversionProblem prob;
    prob.statistic = [](double t) { return (t - 2.0) * (t - 2.0); };
    prob.center = 2.0;
    prob.half_width = 1.0;
    prob.threshold = 2.25;  // true accept region [0.5, 3.5]
    const InversionOutcome out = invert_statistic(prob);
    CHECK(out.refined);
    CHECK(!out.empty);
    CHECK(!out.lower_unbounded);
    CHECK(!out.upper_unbounded);
    CHECK(out.lower == doctest::Approx(0.5).epsilon(3e-4));
    CHECK(out.upper == doctest::Approx(3.5).epsilon(3e-4));
    CHECK(out.scanned >= 402);  // at least one doubling before the edges reject
  }

  TEST_CASE("inversion engine reports unbounded sides at the doubling cap") {
    InversionProblem prob;
    prob.statistic = [](double) { return 0.0; };
    prob.center = 0.0;
    prob.half_width = 1.0;
    prob.threshold = 1.0;
    const InversionOutcome out = invert_statistic(prob);
    CHECK(out.lower_unbounded);
    CHECK(out.upper_unbounded);
    CHECK(out.lower == -std::numeric_limits<double>::infinity());
    CHECK(out.upper == std::numeric_limits<double>::infinity());
    CHECK(out.scanned == 9 * 201);  // initial grid plus max_doublings passes

    InversionProblem half = prob;
    half.statistic = [](double t) { return t <= 0.0 ? 0.0 : t * t; };
    const InversionOutcome one_side = invert_statistic(half);
    CHECK(one_side.lower_unbounded);
    CHECK(!one_side.upper_unbounded);
    CHECK(one_side.refined);
    CHECK(one_side.upper == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("inversion engine flags an empty accept region") {
    InversionProblem prob;
    prob.statistic = [](double t) { return 1.0 + t * t; };
    prob.center = 0.0;
    prob.half_width = 2.0;
    prob.threshold = 0.5;
    const InversionOutcome out = invert_statistic(prob);
    CHECK(out.empty);
    CHECK(!out.refined);
    CHECK(std::isnan(out.lower));
    CHECK(std::isnan(out.upper));
    CHECK(out.scanned == 201);
  }

  TEST_CASE("inversion engine falls back to the hull of disjoint accept islands") {
    InversionProblem prob;
    prob.statistic = [](double t) {
      return std::min((t - 1.0) * (t - 1.0), (t + 1.0) * (t + 1.0));
    };
    prob.center = 0.0;
    prob.half_width = 3.0;
    prob.threshold = 0.5;  // islands around -1 and +1, rejected at 0
    const InversionOutcome out = invert_statistic(prob);
    CHECK(!out.refined);
    CHECK(!out.empty);
    const double edge = 1.0 + std::sqrt(0.5);
    CHECK(out.lower == doctest::Approx(-edge).epsilon(0.02));
    CHECK(out.upper == doctest::Approx(edge).epsilon(0.02));
    CHECK(out.scanned == 201);
  }

  TEST_CASE("inversion engine validates its configuration") {
    InversionProblem prob;
    prob.statistic = [](double) { return 0.0; };
    prob.half_width = 1.0;
    prob.grid_points = 4;
    CHECK_THROWS_AS(invert_statistic(prob), SchemaMismatch);
    prob.grid_points = 3;
    CHECK_THROWS_AS(invert_statistic(prob), SchemaMismatch);
    prob.grid_points = 201;
    prob.half_width = 0.0;
    CHECK_THROWS_AS(invert_statistic(prob), SchemaMismatch);
    prob.half_width = 1.0;
    prob.refine_tol = 0.0;
    CHECK_THROWS_AS(invert_statistic(prob), SchemaMismatch);
  }

  TEST_CASE("prepare_sample propagates sample validation") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> xi{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(prepare_sample(a, xi, 0.5), QueryBelowSupport);
    const std::vector<double> short_xi{0.0};
    CHECK_THROWS_AS(prepare_sample(a, short_xi, 1.5), LengthMismatch);
    const std::vector<double> one_a{1.0};
    CHECK_THROWS_AS(prepare_sample(one_a, short_xi, 1.0), TooFewPoints);
  }
}
