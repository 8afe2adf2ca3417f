#include "drlrt/nuisance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "drlrt/errors.hpp"
#include "drlrt/io.hpp"

namespace drlrt {

namespace {

// Knot of the quartic segment and of the outside-range indicators in the
// rich outcome design.
constexpr double kRichKnot = 1.5;

void fill_rich(double a, const double* l, std::size_t d, double* out) {
  std::size_t p = 0;
  out[p++] = 1.0;
  out[p++] = a;
  for (std::size_t j = 0; j < d; ++j) out[p++] = l[j];
  for (std::size_t j = 0; j < d; ++j) out[p++] = a * l[j];
  out[p++] = a * a * a;
  out[p++] = (a >= -kRichKnot && a <= kRichKnot) ? (a * a) * (a * a) : 0.0;
  out[p++] = a > kRichKnot ? 1.0 : 0.0;
  out[p++] = a < -kRichKnot ? 1.0 : 0.0;
}

std::size_t outcome_dim(OutcomeSpec spec, std::size_t d, const CustomBasis& basis) {
  switch (spec) {
    case OutcomeSpec::rich: return 2 * d + 6;
    case OutcomeSpec::intercept_l1: return 2;
    case OutcomeSpec::custom: return basis.dim;
  }
  return 0;
}

void outcome_features(OutcomeSpec spec, std::size_t d, const CustomBasis& basis, double a,
                      const double* l, double* out) {
  switch (spec) {
    case OutcomeSpec::rich:
      fill_rich(a, l, d, out);
      return;
    case OutcomeSpec::intercept_l1:
      out[0] = 1.0;
      out[1] = l[0];
      return;
    case OutcomeSpec::custom:
      basis.fill(a, l, d, out);
      return;
  }
}

std::size_t propensity_dim(PropensitySpec spec, std::size_t d, const CustomBasis& basis) {
  switch (spec) {
    case PropensitySpec::linear_l: return d + 1;
    case PropensitySpec::intercept_l1: return 2;
    case PropensitySpec::custom: return basis.dim;
  }
  return 0;
}

void propensity_features(PropensitySpec spec, std::size_t d, const CustomBasis& basis,
                         const double* l, double* out) {
  switch (spec) {
    case PropensitySpec::linear_l:
      out[0] = 1.0;
      for (std::size_t j = 0; j < d; ++j) out[1 + j] = l[j];
      return;
    case PropensitySpec::intercept_l1:
      out[0] = 1.0;
      out[1] = l[0];
      return;
    case PropensitySpec::custom:
      basis.fill(0.0, l, d, out);
      return;
  }
}

struct OlsFit {
  std::vector<double> coef;
  double rss = 0.0;
  bool ridged = false;
};

// Normal-equations least squares with a ridge fallback. `fill_row` writes the
// i-th design row; `response` reads the i-th response.
template <typename FillRow, typename Response>
OlsFit fit_ols(std::size_t n, std::size_t p, FillRow fill_row, Response response,
               const char* what) {
  if (n <= p) {
    throw TooFewSamples(std::string(what) + ": need more than " + std::to_string(p) +
                        " rows, got " + std::to_string(n));
  }
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  double yty = 0.0;
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    fill_row(i, row.data());
    const double yi = response(i);
    Eigen::Map<const Eigen::VectorXd> x(row.data(), p);
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
    xty += yi * x;
    yty += yi * yi;
  }
  xtx = xtx.selfadjointView<Eigen::Lower>();
  if (!xtx.allFinite() || !xty.allFinite()) {
    throw DegenerateDesign(std::string(what) + ": normal equations are not finite");
  }

  const double scale = std::max(1.0, xty.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd beta = xtx.ldlt().solve(xty);
  bool ok = beta.allFinite() &&
            (xty - xtx * beta).lpNorm<Eigen::Infinity>() <= 1e-8 * scale;
  bool ridged = false;
  if (!ok) {
    const double ridge = 1e-8 * xtx.trace() / static_cast<double>(p);
    Eigen::MatrixXd xtx_r = xtx;
    xtx_r.diagonal().array() += ridge;
    beta = xtx_r.ldlt().solve(xty);
    if (!beta.allFinite()) {
      throw DegenerateDesign(std::string(what) + ": normal equations unsolvable even with ridge");
    }
    std::fprintf(stderr, "warning: %s: rank-deficient design, ridge %g applied\n", what, ridge);
    ridged = true;
  }

  OlsFit fit;
  fit.coef.assign(beta.data(), beta.data() + p);
  fit.rss = std::max(0.0, yty - 2.0 * beta.dot(xty) + beta.dot(xtx * beta));
  fit.ridged = ridged;
  return fit;
}

thread_local std::vector<double> t_feature_buf;

}  // namespace

OutcomeModel::OutcomeModel(OutcomeSpec spec, std::size_t d, std::vector<double> coef,
                           CustomBasis basis)
    : spec_(spec), d_(d), coef_(std::move(coef)), basis_(std::move(basis)) {
  if (coef_.size() != feature_count()) {
    throw LengthMismatch("outcome model: " + std::to_string(coef_.size()) +
                         " coefficients for a " + std::to_string(feature_count()) +
                         "-feature design");
  }
}

std::size_t OutcomeModel::feature_count() const { return outcome_dim(spec_, d_, basis_); }

void OutcomeModel::features(double a, const double* l, double* out) const {
  outcome_features(spec_, d_, basis_, a, l, out);
}

double OutcomeModel::mu(double a, const double* l) const {
  const std::size_t p = feature_count();
  t_feature_buf.resize(p);
  features(a, l, t_feature_buf.data());
  double acc = 0.0;
  for (std::size_t j = 0; j < p; ++j) acc += coef_[j] * t_feature_buf[j];
  return acc;
}

OutcomeModel OutcomeModel::negated() const {
  OutcomeModel flipped = *this;
  for (double& c : flipped.coef_) c = -c;
  return flipped;
}

PropensityModel::PropensityModel(PropensitySpec spec, std::size_t d, std::vector<double> coef,
                                 double sigma2, CustomBasis basis)
    : spec_(spec), d_(d), coef_(std::move(coef)), sigma2_(sigma2), basis_(std::move(basis)) {
  if (coef_.size() != feature_count()) {
    throw LengthMismatch("propensity model: " + std::to_string(coef_.size()) +
                         " coefficients for a " + std::to_string(feature_count()) +
                         "-feature design");
  }
  if (!(sigma2_ > 0.0)) throw DegenerateDesign("propensity model: sigma2 must be positive");
}

std::size_t PropensityModel::feature_count() const { return propensity_dim(spec_, d_, basis_); }

void PropensityModel::features(const double* l, double* out) const {
  propensity_features(spec_, d_, basis_, l, out);
}

double PropensityModel::mean(const double* l) const {
  const std::size_t p = feature_count();
  t_feature_buf.resize(p);
  features(l, t_feature_buf.data());
  double acc = 0.0;
  for (std::size_t j = 0; j < p; ++j) acc += coef_[j] * t_feature_buf[j];
  return acc;
}

double PropensityModel::pi(double a, const double* l) const { return pi_from_mean(a, mean(l)); }

double PropensityModel::pi_from_mean(double a, double mean) const {
  const double z2 = (a - mean) * (a - mean) / sigma2_;
  return std::exp(-0.5 * z2) / std::sqrt(2.0 * std::numbers::pi * sigma2_);
}

OutcomeModel fit_outcome(const Dataset& data, OutcomeSpec spec, CustomBasis basis) {
  data.validate();
  if (spec == OutcomeSpec::intercept_l1 && data.d == 0) {
    throw SchemaMismatch("outcome design intercept_l1 needs at least one confounder");
  }
  if (spec == OutcomeSpec::custom && (basis.dim == 0 || !basis.fill)) {
    throw SchemaMismatch("custom outcome design needs a basis");
  }
  const std::size_t p = outcome_dim(spec, data.d, basis);
  OlsFit fit = fit_ols(
      data.n(), p,
      [&](std::size_t i, double* out) {
        outcome_features(spec, data.d, basis, data.a[i], data.l_row(i), out);
      },
      [&](std::size_t i) { return data.y[i]; }, "outcome regression");
  OutcomeModel model(spec, data.d, std::move(fit.coef), std::move(basis));
  model.set_ridged(fit.ridged);
  return model;
}

PropensityModel fit_propensity(const Dataset& data, PropensitySpec spec,
                               std::optional<double> sigma2, CustomBasis basis) {
  data.validate();
  if (spec == PropensitySpec::intercept_l1 && data.d == 0) {
    throw SchemaMismatch("propensity design intercept_l1 needs at least one confounder");
  }
  if (spec == PropensitySpec::custom && (basis.dim == 0 || !basis.fill)) {
    throw SchemaMismatch("custom propensity design needs a basis");
  }
  if (sigma2 && !(*sigma2 > 0.0)) {
    throw DegenerateDesign("propensity fit: supplied sigma2 must be positive");
  }
  const std::size_t p = propensity_dim(spec, data.d, basis);
  OlsFit fit = fit_ols(
      data.n(), p,
      [&](std::size_t i, double* out) {
        propensity_features(spec, data.d, basis, data.l_row(i), out);
      },
      [&](std::size_t i) { return data.a[i]; }, "propensity regression");
  double s2;
  if (sigma2) {
    s2 = *sigma2;
  } else {
    s2 = fit.rss / static_cast<double>(data.n() - p);
    if (!(s2 > 0.0)) {
      throw DegenerateDesign("propensity fit: estimated residual variance is zero");
    }
  }
  PropensityModel model(spec, data.d, std::move(fit.coef), s2, std::move(basis));
  model.set_ridged(fit.ridged);
  return model;
}

ParametricNuisance fit_nuisance(const Dataset& train, const NuisanceSpec& spec,
                                const Dataset& reference) {
  if (reference.d != train.d) {
    throw SchemaMismatch("nuisance fit: train has " + std::to_string(train.d) +
                         " confounders, reference has " + std::to_string(reference.d));
  }
  ParametricNuisance model{fit_outcome(train, spec.outcome, spec.outcome_basis),
                           fit_propensity(train, spec.propensity, spec.sigma2,
                                          spec.propensity_basis),
                           spec.truncation_floor, reference.d, reference.l};
  return model;
}

double ParametricNuisance::pi_truncated(double a, const double* l) const {
  return std::max(propensity.pi(a, l), truncation_floor);
}

double ParametricNuisance::marginal_density(double a) const {
  const std::size_t rows = reference_rows();
  if (rows == 0) throw EmptyInput("marginal density: empty reference sample");
  double acc = 0.0;
  for (std::size_t j = 0; j < rows; ++j) acc += pi_truncated(a, reference_row(j));
  return acc / static_cast<double>(rows);
}

double ParametricNuisance::g(double a, const double* l) const {
  return pi_truncated(a, l) / marginal_density(a);
}

void ExternalNuisance::validate() const {
  const std::size_t rows = n();
  if (g_ii.size() != rows || mbar.size() != rows) {
    throw SchemaMismatch("external nuisance: column lengths differ");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::isfinite(mu_ii[i]) || !std::isfinite(g_ii[i]) || !std::isfinite(mbar[i])) {
      throw SchemaMismatch("external nuisance: non-finite entry in row " + std::to_string(i));
    }
    if (!(g_ii[i] > 0.0)) {
      throw NonPositiveG("external nuisance: g_ii <= 0 in row " + std::to_string(i));
    }
  }
  if (mu_matrix && mu_matrix->size() != rows * rows) {
    throw SchemaMismatch("external nuisance: mu matrix is " + std::to_string(mu_matrix->size()) +
                         " entries, expected " + std::to_string(rows * rows));
  }
}

ExternalNuisance load_external_nuisance(const std::string& path,
                                        const std::string& mu_matrix_path) {
  const CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"row", "mu_ii", "g_ii", "mbar"}) {
    throw SchemaMismatch(path + ": expected header row,mu_ii,g_ii,mbar");
  }
  ExternalNuisance ext;
  ext.mu_ii.reserve(table.rows);
  ext.g_ii.reserve(table.rows);
  ext.mbar.reserve(table.rows);
  for (std::size_t r = 0; r < table.rows; ++r) {
    if (table.at(r, 0) != static_cast<double>(r)) {
      throw SchemaMismatch(path + ": row indices must be 0.." + std::to_string(table.rows - 1) +
                           " in order");
    }
    ext.mu_ii.push_back(table.at(r, 1));
    ext.g_ii.push_back(table.at(r, 2));
    ext.mbar.push_back(table.at(r, 3));
  }
  if (!mu_matrix_path.empty()) {
    const Matrix m = read_matrix_csv(mu_matrix_path);
    if (m.rows != table.rows || m.cols != table.rows) {
      throw SchemaMismatch(mu_matrix_path + ": expected a " + std::to_string(table.rows) + "x" +
                           std::to_string(table.rows) + " matrix");
    }
    ext.mu_matrix = m.cells;
  }
  ext.validate();
  return ext;
}

void write_external_nuisance(const std::string& path, const ExternalNuisance& ext,
                             const std::string& mu_matrix_path) {
  ext.validate();
  std::ofstream out(path);
  if (!out) throw SchemaMismatch(path + ": cannot open for writing");
  out << "row,mu_ii,g_ii,mbar\n";
  for (std::size_t i = 0; i < ext.n(); ++i) {
    write_csv_row(out, {static_cast<double>(i), ext.mu_ii[i], ext.g_ii[i], ext.mbar[i]});
  }
  if (!out.good()) throw SchemaMismatch(path + ": write failed");
  if (!mu_matrix_path.empty()) {
    if (!ext.mu_matrix) {
      throw EvaluationUnavailable("external nuisance: no mu matrix to write");
    }
    write_matrix_csv(mu_matrix_path, Matrix{ext.n(), ext.n(), *ext.mu_matrix});
  }
}

ExternalNuisance externalize_nuisance(const ParametricNuisance& model, const Dataset& data,
                                      bool with_matrix) {
  data.validate();
  const std::size_t rows = data.n();
  const std::size_t ref_rows = model.reference_rows();
  if (ref_rows == 0) throw EmptyInput("externalize: empty reference sample");
  ExternalNuisance ext;
  ext.mu_ii.resize(rows);
  ext.g_ii.resize(rows);
  ext.mbar.resize(rows);
  if (with_matrix) ext.mu_matrix.emplace(rows * rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double ai = data.a[i];
    ext.mu_ii[i] = model.outcome.mu(ai, data.l_row(i));
    ext.g_ii[i] = model.g(ai, data.l_row(i));
    double acc = 0.0;
    for (std::size_t j = 0; j < ref_rows; ++j) acc += model.outcome.mu(ai, model.reference_row(j));
    ext.mbar[i] = acc / static_cast<double>(ref_rows);
    if (with_matrix) {
      for (std::size_t j = 0; j < rows; ++j) {
        (*ext.mu_matrix)[i * rows + j] = model.outcome.mu(ai, data.l_row(j));
      }
    }
  }
  return ext;
}

ExternalNuisance identity_nuisance(std::size_t n) {
  ExternalNuisance ext;
  ext.mu_ii.assign(n, 0.0);
  ext.g_ii.assign(n, 1.0);
  ext.mbar.assign(n, 0.0);
  return ext;
}

}  // namespace drlrt
