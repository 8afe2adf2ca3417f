#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "drlrt/dataset.hpp"

namespace drlrt {

/// Basis for a caller-supplied regression design: fills `out` (length `dim`)
/// from (a, l). Must be pure.
struct CustomBasis {
  std::size_t dim = 0;
  std::function<void(double a, const double* l, std::size_t d, double* out)> fill;
};

/// Outcome regression design. "rich" is the saturated design intended for the
/// simulation DGP: intercept, a, l1..ld, a*l1..a*ld, a^3, a^4 on |a| <= 1.5,
/// and the two outside-range indicators. "intercept_l1" regresses on l1 only
/// (a deliberately poor model for robustness experiments).
enum class OutcomeSpec { rich, intercept_l1, custom };

class OutcomeModel {
public:
  OutcomeModel() = default;
  OutcomeModel(OutcomeSpec spec, std::size_t d, std::vector<double> coef,
               CustomBasis basis = {});

  std::size_t feature_count() const;
  void features(double a, const double* l, double* out) const;
  double mu(double a, const double* l) const;

  OutcomeSpec spec() const { return spec_; }
  std::size_t d() const { return d_; }
  const std::vector<double>& coef() const { return coef_; }
  bool ridged() const { return ridged_; }
  void set_ridged(bool r) { ridged_ = r; }

  /// Same fitted mean with the sign of the response flipped.
  OutcomeModel negated() const;

private:
  OutcomeSpec spec_ = OutcomeSpec::rich;
  std::size_t d_ = 0;
  std::vector<double> coef_;
  CustomBasis basis_;
  bool ridged_ = false;
};

/// Conditional treatment density: A | L ~ N(x(l)'gamma, sigma2) with x(l) the
/// mean design. "linear_l" uses intercept + l1..ld; "intercept_l1" uses
/// intercept + l1 only.
enum class PropensitySpec { linear_l, intercept_l1, custom };

class PropensityModel {
public:
  PropensityModel() = default;
  PropensityModel(PropensitySpec spec, std::size_t d, std::vector<double> coef,
                  double sigma2, CustomBasis basis = {});

  std::size_t feature_count() const;
  void features(const double* l, double* out) const;
  double mean(const double* l) const;
  /// Gaussian density at a given l; strictly positive.
  double pi(double a, const double* l) const;
  /// Same density with the conditional mean already computed (lets callers
  /// hoist the means out of repeated-a loops).
  double pi_from_mean(double a, double mean) const;

  PropensitySpec spec() const { return spec_; }
  std::size_t d() const { return d_; }
  const std::vector<double>& coef() const { return coef_; }
  double sigma2() const { return sigma2_; }
  bool ridged() const { return ridged_; }
  void set_ridged(bool r) { ridged_ = r; }

private:
  PropensitySpec spec_ = PropensitySpec::linear_l;
  std::size_t d_ = 0;
  std::vector<double> coef_;
  double sigma2_ = 1.0;
  CustomBasis basis_;
  bool ridged_ = false;
};

/// Ordinary least squares on the stated design. Rank-deficient systems fall
/// back to a ridge of 1e-8 * trace(X'X)/p with a stderr warning; a solve that
/// is still non-finite throws DegenerateDesign. Throws TooFewSamples unless
/// n > p.
OutcomeModel fit_outcome(const Dataset& data, OutcomeSpec spec, CustomBasis basis = {});

/// OLS for the conditional mean. sigma2: supplied fixed value, or estimated
/// as RSS/(n-p) when absent. Throws DegenerateDesign when the estimate (or a
/// supplied value) is not strictly positive.
PropensityModel fit_propensity(const Dataset& data, PropensitySpec spec,
                               std::optional<double> sigma2 = std::nullopt,
                               CustomBasis basis = {});

/// Fitted nuisance pair plus everything g-hat needs: the truncation floor and
/// the reference L-sample backing the marginal density f-hat and the m-bar
/// average.
struct ParametricNuisance {
  OutcomeModel outcome;
  PropensityModel propensity;
  double truncation_floor = 0.01;
  std::size_t reference_d = 0;
  std::vector<double> reference_l;  // row-major, reference_rows * reference_d

  std::size_t reference_rows() const {
    return reference_d == 0 ? reference_l.size() : reference_l.size() / reference_d;
  }
  const double* reference_row(std::size_t j) const {
    return reference_l.data() + j * reference_d;
  }

  double pi_truncated(double a, const double* l) const;
  /// f-hat(a): mean of the truncated propensity density over the reference
  /// rows. Throws EmptyInput when the reference sample is empty.
  double marginal_density(double a) const;
  /// g-hat(a, l) = truncated pi / f-hat(a); strictly positive by construction.
  double g(double a, const double* l) const;
};

/// Recipe for fitting both nuisance models in one call.
struct NuisanceSpec {
  OutcomeSpec outcome = OutcomeSpec::rich;
  PropensitySpec propensity = PropensitySpec::linear_l;
  std::optional<double> sigma2;      // fixed propensity variance; estimated when absent
  double truncation_floor = 0.01;
  CustomBasis outcome_basis;         // used only with the custom specs
  CustomBasis propensity_basis;
};

/// Fits both models on `train` and backs f-hat / m-bar with the confounder
/// rows of `reference` (pass `train` itself for the no-split pipeline).
/// Throws SchemaMismatch when the two samples disagree on the confounder
/// dimension.
ParametricNuisance fit_nuisance(const Dataset& train, const NuisanceSpec& spec,
                                const Dataset& reference);

/// Precomputed per-row nuisance evaluations, aligned to dataset row order:
/// mu_ii = mu-hat(A_i, L_i), g_ii = g-hat(A_i, L_i), mbar_i = mean over rows j
/// of mu-hat(A_i, L_j). The optional mu_matrix (row-major n x n, [i][j] =
/// mu-hat(A_i, L_j)) lets the m-bar average be rebuilt over row subsets; the
/// scalar columns alone cannot.
struct ExternalNuisance {
  std::vector<double> mu_ii;
  std::vector<double> g_ii;
  std::vector<double> mbar;
  std::optional<std::vector<double>> mu_matrix;

  std::size_t n() const { return mu_ii.size(); }
  void validate() const;  // throws SchemaMismatch / NonPositiveG
};

/// Reads the row-aligned table (header `row,mu_ii,g_ii,mbar`, rows 0..n-1 in
/// order) and, when given, the n x n companion matrix file.
ExternalNuisance load_external_nuisance(const std::string& path,
                                        const std::string& mu_matrix_path = "");

void write_external_nuisance(const std::string& path, const ExternalNuisance& ext,
                             const std::string& mu_matrix_path = "");

/// Evaluates a parametric nuisance on a dataset into the row-aligned form
/// (including the matrix when with_matrix is set).
ExternalNuisance externalize_nuisance(const ParametricNuisance& model, const Dataset& data,
                                      bool with_matrix = false);

/// Identity nuisance (mu == 0, g == 1): pseudo-outcomes reduce to the raw
/// responses, giving the plain monotone-regression mode.
ExternalNuisance identity_nuisance(std::size_t n);

struct NuisanceModel {
  std::variant<ParametricNuisance, ExternalNuisance> impl;

  bool is_external() const { return std::holds_alternative<ExternalNuisance>(impl); }
  const ParametricNuisance& parametric() const { return std::get<ParametricNuisance>(impl); }
  const ExternalNuisance& external() const { return std::get<ExternalNuisance>(impl); }

  /// Provenance tag carried into PseudoOutcomes ("parametric" / "external").
  std::string source() const { return is_external() ? "external" : "parametric"; }
};

}  // namespace drlrt
