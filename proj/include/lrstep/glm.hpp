#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lrstep {

// Link is fixed per family: identity, logit, log.
enum class Family { gaussian, binomial, poisson };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

struct FitSummary {
  Eigen::VectorXd coefficients;  // intercept first
  Eigen::VectorXd std_errors;
  Eigen::VectorXd p_values;      // Wald, upper tail of chi-squared(1) at (b/se)^2
  Eigen::MatrixXd covariance;
  double minus2loglik = 0.0;
  double dispersion = 1.0;       // ML residual variance for gaussian, 1 otherwise
  std::size_t n = 0;
  std::size_t m = 0;             // number of estimated coefficients
  Family family = Family::gaussian;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> term_labels;  // one per coefficient
  std::string warning;
};

struct GlmOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;       // relative change in -2logLik
  double separation_eta = 30.0;  // |linear predictor| beyond this counts as divergence
};

/// Fits a GLM by iteratively reweighted least squares.
///
/// X must carry its own intercept column. Throws RankDeficientError naming
/// the dependent columns and ValidationError for bad inputs. Divergence
/// (e.g. perfect separation in the binomial case) is not an exception: the
/// last good iterate comes back with converged = false and a warning.
FitSummary fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                   std::span<const std::string> labels = {}, const GlmOptions& options = {});

/// -2 log-likelihood of y given a linear predictor. Gaussian uses the
/// supplied residual variance.
double minus2loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, Family family, double dispersion = 1.0);

/// Inverse link applied elementwise.
Eigen::VectorXd mean_response(const Eigen::VectorXd& eta, Family family);

/// Checks the response domain for the family; throws ValidationError.
void check_response(const Eigen::VectorXd& y, Family family);

enum class CriterionKind { aic, bic, bonferroni, fixed_steps };

struct StoppingCriterion {
  CriterionKind kind = CriterionKind::bic;
  double alpha = 0.05;        // bonferroni only
  std::size_t max_steps = 0;  // fixed_steps only

  static StoppingCriterion aic() { return {CriterionKind::aic}; }
  static StoppingCriterion bic() { return {CriterionKind::bic}; }
  static StoppingCriterion bonferroni(double alpha = 0.05) { return {CriterionKind::bonferroni, alpha}; }
  static StoppingCriterion fixed_steps(std::size_t steps) { return {CriterionKind::fixed_steps, 0.05, steps}; }

  /// Accepts "aic", "bic", "bonferroni" and "steps=K".
  static StoppingCriterion parse(std::string_view text, double alpha = 0.05);
  std::string to_string() const;

  friend bool operator==(const StoppingCriterion&, const StoppingCriterion&) = default;
};

/// aic: 2, bic: log(n), bonferroni: chi-squared(1) quantile at alpha / n_tests,
/// fixed_steps: 0.
double penalty_per_parameter(const StoppingCriterion& criterion, std::size_t n, std::size_t n_tests);

double penalized_objective(const FitSummary& fit, const StoppingCriterion& criterion, std::size_t n_tests);

}  // namespace lrstep
