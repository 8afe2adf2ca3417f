#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "drlrt/crossfit.hpp"
#include "drlrt/errors.hpp"
#include "drlrt/harness.hpp"
#include "drlrt/limit_dist.hpp"
#include "drlrt/rng.hpp"

using namespace drlrt;

namespace {

std::vector<std::size_t> fold_sizes(const FoldAssignment& folds) {
  std::vector<std::size_t> sizes(folds.K, 0);
  for (std::size_t label : folds.fold_of) {
    REQUIRE(label >= 1);
    REQUIRE(label <= folds.K);
    ++sizes[label - 1];
  }
  std::sort(sizes.begin(), sizes.end());
  return sizes;
}

QuantileSource sim_source(std::size_t n_mc, std::uint64_t seed) {
  LimitSimConfig cfg;
  cfg.n_mc = n_mc;
  cfg.seed = seed;
  return QuantileSource(QuantilePolicy::simulate, cfg);
}

Dataset concat(const Dataset& x, const Dataset& y) {
  Dataset out = x;
  out.l.insert(out.l.end(), y.l.begin(), y.l.end());
  out.a.insert(out.a.end(), y.a.begin(), y.a.end());
  out.y.insert(out.y.end(), y.y.begin(), y.y.end());
  return out;
}

}  // namespace

TEST_SUITE("crossfit") {
  TEST_CASE("fold sizes differ by at most one and cover the sample") {
    CHECK(fold_sizes(assign_folds(10, 2, 1)) == std::vector<std::size_t>{5, 5});
    CHECK(fold_sizes(assign_folds(11, 2, 1)) == std::vector<std::size_t>{5, 6});
    CHECK(fold_sizes(assign_folds(23, 5, 9)) == std::vector<std::size_t>{4, 4, 5, 5, 5});

    const FoldAssignment folds = assign_folds(23, 5, 9);
    std::vector<bool> seen(23, false);
    for (std::size_t k = 1; k <= 5; ++k) {
      for (std::size_t row : folds.rows_in(k)) {
        CHECK(!seen[row]);
        seen[row] = true;
      }
      CHECK(folds.rows_in(k).size() + folds.rows_not_in(k).size() == 23);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
  }

  TEST_CASE("fold assignment is seeded and seed sensitive") {
    const FoldAssignment a = assign_folds(50, 3, 7);
    const FoldAssignment b = assign_folds(50, 3, 7);
    CHECK(a.fold_of == b.fold_of);
    const FoldAssignment c = assign_folds(50, 3, 8);
    CHECK(a.fold_of != c.fold_of);
  }

  TEST_CASE("fold assignment rejects degenerate configurations") {
    CHECK_THROWS_AS(assign_folds(100, 1, 0), TooFewSamples);
    CHECK_THROWS_AS(assign_folds(3, 2, 0), TooFewSamples);
    CHECK_THROWS_AS(assign_folds(5, 3, 0), TooFewSamples);
  }

  TEST_CASE("duplicated halves give two identical folds") {
    DgpConfig cfg;
    cfg.s = 0.1;
    cfg.n = 40;
    cfg.seed = 2;
    const Dataset half = draw_dataset(cfg);
    const Dataset data = concat(half, half);
    FoldAssignment folds;
    folds.K = 2;
    folds.fold_of.assign(80, 1);
    std::fill(folds.fold_of.begin() + 40, folds.fold_of.end(), 2);

    const std::vector<FoldData> slices =
        crossfit_pseudo(data, scenario_spec(Scenario::both_well), folds, 1);
    REQUIRE(slices.size() == 2);
    CHECK(slices[0].eval.a == slices[1].eval.a);
    CHECK(slices[0].xi == slices[1].xi);

    QuantileSource src = sim_source(400, 11);
    CrossfitOptions opt;
    opt.direction = Direction::decreasing;
    const double a0 = 7.0;
    const CrossfitResult res = crossfit_eval(slices, a0, true_theta(a0), opt, src);
    REQUIRE(res.per_fold.size() == 2);
    CHECK(res.per_fold[0].s_n == res.per_fold[1].s_n);
    CHECK(res.per_fold[0].kappa_hat == res.per_fold[1].kappa_hat);
    CHECK(res.per_fold[0].lambda_hat == res.per_fold[1].lambda_hat);
    CHECK(res.per_fold[0].theta_hat_a0 == res.per_fold[1].theta_hat_a0);
    CHECK(res.s_bar == res.per_fold[0].s_n);
    CHECK(res.kappa_bar == res.per_fold[0].kappa_hat);
    CHECK(res.n == 80);
    CHECK(res.K == 2);
  }

  TEST_CASE("all-zero responses never reject their own level") {
    DgpConfig cfg;
    cfg.s = 0.1;
    cfg.n = 60;
    cfg.seed = 5;
    Dataset data = draw_dataset(cfg);
    std::fill(data.y.begin(), data.y.end(), 0.0);
    QuantileSource src = sim_source(400, 13);
    CrossfitOptions opt;
    opt.K = 2;
    opt.fold_seed = 3;

    const CrossfitResult at_zero = crossfit_test(data, scenario_spec(Scenario::both_well),
                                                 7.0, 0.0, opt, src);
    CHECK(at_zero.s_bar == 0.0);
    CHECK(!at_zero.reject);

    const CrossfitResult off = crossfit_test(data, scenario_spec(Scenario::both_well),
                                             7.0, 0.5, opt, src);
    CHECK(off.s_bar > 0.0);
    CHECK(off.reject);

    const CiResult ci = crossfit_ci(data, scenario_spec(Scenario::both_well), 7.0, opt, src);
    CHECK(!ci.empty);
    CHECK(ci.lower <= 0.0);
    CHECK(0.0 <= ci.upper);
  }

  TEST_CASE("a fold whose support misses the query aborts the test") {
    DgpConfig cfg;
    cfg.s = 0.1;
    cfg.n = 60;
    cfg.seed = 8;
    const Dataset data = draw_dataset(cfg);
    const std::size_t min_row = static_cast<std::size_t>(
        std::min_element(data.a.begin(), data.a.end()) - data.a.begin());

    FoldAssignment folds;
    folds.K = 2;
    folds.fold_of.assign(60, 0);
    for (std::size_t i = 0; i < 60; ++i) folds.fold_of[i] = i % 2 + 1;
    folds.fold_of[min_row] = 1;  // the global minimum sits in fold 1 only

    const std::vector<FoldData> slices =
        crossfit_pseudo(data, scenario_spec(Scenario::both_well), folds, 1);
    QuantileSource src = sim_source(400, 17);
    CrossfitOptions opt;
    const double a0 = data.a[min_row];
    CHECK_THROWS_AS(crossfit_eval(slices, a0, 0.0, opt, src), FoldQueryBelowSupport);
    CHECK_THROWS_AS(crossfit_ci_eval(slices, a0, opt, src), FoldQueryBelowSupport);
  }

  TEST_CASE("averaging folds tightens the critical value") {
    QuantileSource src = sim_source(2000, 21);
    const double q1 = src.critical_value(0.90, 5.0, 1);
    const double q2 = src.critical_value(0.90, 5.0, 2);
    CHECK(q2 < q1);
  }

  TEST_CASE("table policy cannot serve fold-averaged quantiles") {
    QuantileSource table(QuantilePolicy::table, LimitSimConfig{});
    CHECK_THROWS_AS(table.critical_value(0.90, 5.0, 2), QuantileUnavailable);
  }

  TEST_CASE("cross-fit composition is deterministic") {
    DgpConfig cfg;
    cfg.s = 0.1;
    cfg.n = 80;
    cfg.seed = 12;
    const Dataset data = draw_dataset(cfg);
    QuantileSource src = sim_source(400, 23);
    CrossfitOptions opt;
    opt.K = 2;
    opt.fold_seed = 19;
    opt.direction = Direction::decreasing;
    const double a0 = 7.0;

    const CrossfitResult first =
        crossfit_test(data, scenario_spec(Scenario::both_well), a0, true_theta(a0), opt, src);
    const CrossfitResult second =
        crossfit_test(data, scenario_spec(Scenario::both_well), a0, true_theta(a0), opt, src);
    CHECK(first.s_bar == second.s_bar);
    CHECK(first.kappa_bar == second.kappa_bar);
    CHECK(first.q_crit == second.q_crit);
    CHECK(first.reject == second.reject);
    CHECK(first.n == 80);
    REQUIRE(first.per_fold.size() == 2);
    CHECK(first.per_fold[0].n_k + first.per_fold[1].n_k == 80);
    CHECK(first.per_fold[0].bandwidth > 0.0);

    const CiResult ci =
        crossfit_ci(data, scenario_spec(Scenario::both_well), a0, opt, src);
    const CiResult ci2 =
        crossfit_ci(data, scenario_spec(Scenario::both_well), a0, opt, src);
    CHECK(ci.lower == ci2.lower);
    CHECK(ci.upper == ci2.upper);
    if (!ci.empty) CHECK(ci.lower <= ci.upper);
  }

  TEST_CASE("cross-fit evaluation validates its inputs") {
    std::vector<FoldData> one;
    one.push_back(FoldData{Dataset{}, {}});
    QuantileSource src(QuantilePolicy::table, LimitSimConfig{});
    CrossfitOptions opt;
    CHECK_THROWS_AS(crossfit_eval(one, 0.0, 0.0, opt, src), TooFewSamples);
    opt.alpha = 0.0;
    std::vector<FoldData> two(2, FoldData{Dataset{}, {}});
    CHECK_THROWS_AS(crossfit_eval(two, 0.0, 0.0, opt, src), SchemaMismatch);
  }
}
