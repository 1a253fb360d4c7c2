#include "lrstep/glm.hpp"

#include "lrstep/distributions.hpp"
#include "lrstep/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace lrstep {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::gaussian: return "gaussian";
    case Family::binomial: return "binomial";
    case Family::poisson: return "poisson";
  }
  return "gaussian";
}

Family parse_family(std::string_view text) {
  if (text == "gaussian" || text == "normal") return Family::gaussian;
  if (text == "binomial" || text == "logit") return Family::binomial;
  if (text == "poisson") return Family::poisson;
  throw ValidationError("unknown family '" + std::string(text) + "' (expected gaussian, binomial or poisson)");
}

void check_response(const Eigen::VectorXd& y, Family family) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y(i);
    if (!std::isfinite(v)) throw ValidationError("response row " + std::to_string(i + 1) + " is not finite");
    if (family == Family::binomial && v != 0.0 && v != 1.0)
      throw ValidationError("response not in {0,1} at row " + std::to_string(i + 1));
    if (family == Family::poisson && (v < 0.0 || v != std::floor(v)))
      throw ValidationError("response is not a nonnegative integer count at row " + std::to_string(i + 1));
  }
}

Eigen::VectorXd mean_response(const Eigen::VectorXd& eta, Family family) {
  switch (family) {
    case Family::gaussian: return eta;
    case Family::binomial: return eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    case Family::poisson: return eta.array().exp().matrix();
  }
  return eta;
}

double minus2loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, Family family, double dispersion) {
  const auto n = static_cast<double>(y.size());
  switch (family) {
    case Family::gaussian: {
      const double rss = (y - eta).squaredNorm();
      return n * std::log(2.0 * std::numbers::pi * dispersion) + rss / dispersion;
    }
    case Family::binomial: {
      // log(1 + exp(-|e|)) form keeps both tails finite.
      double ll = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double e = eta(i);
        const double log1pexp = std::max(e, 0.0) + std::log1p(std::exp(-std::fabs(e)));
        ll += y(i) * e - log1pexp;
      }
      return -2.0 * ll;
    }
    case Family::poisson: {
      double ll = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i)
        ll += y(i) * eta(i) - std::exp(eta(i)) - std::lgamma(y(i) + 1.0);
      return -2.0 * ll;
    }
  }
  return 0.0;
}

namespace {

std::vector<std::string> default_labels(std::span<const std::string> labels, Eigen::Index m) {
  if (static_cast<Eigen::Index>(labels.size()) == m) return {labels.begin(), labels.end()};
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) out.push_back(j == 0 ? "(Intercept)" : "x" + std::to_string(j));
  return out;
}

void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& labels) {
  // Unit-norm columns so the rank threshold is scale free.
  Eigen::VectorXd norms = X.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < norms.size(); ++j) {
    if (norms(j) == 0.0) throw RankDeficientError({labels[j]}, "design column '" + labels[j] + "' is all zero");
  }
  Eigen::MatrixXd scaled = X * norms.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank == X.cols()) return;
  std::vector<std::string> dependent;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = rank; k < X.cols(); ++k) dependent.push_back(labels[perm(k)]);
  std::ostringstream os;
  os << "design matrix is rank deficient; linearly dependent column(s):";
  for (const auto& d : dependent) os << " '" << d << "'";
  throw RankDeficientError(std::move(dependent), os.str());
}

void finish_summary(FitSummary& fit, const Eigen::MatrixXd& X, const Eigen::VectorXd& weights) {
  const Eigen::MatrixXd info = X.transpose() * weights.asDiagonal() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  const auto m = X.cols();
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(m, m)) * fit.dispersion;
  fit.std_errors = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.p_values.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double z = fit.coefficients(j) / fit.std_errors(j);
    fit.p_values(j) = chi2_upper_tail_df1(z * z);
  }
}

FitSummary fit_gaussian(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, FitSummary fit) {
  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  fit.coefficients = ldlt.solve(X.transpose() * y);
  const Eigen::VectorXd eta = X * fit.coefficients;
  const double rss = (y - eta).squaredNorm();
  const auto n = static_cast<double>(y.size());
  fit.iterations = 1;
  if (!(rss > 0.0)) {
    fit.dispersion = std::numeric_limits<double>::min();
    fit.minus2loglik = -std::numeric_limits<double>::infinity();
    fit.converged = false;
    fit.warning = "perfect fit: residual variance is zero";
  } else {
    fit.dispersion = rss / n;
    fit.minus2loglik = minus2loglik(y, eta, Family::gaussian, fit.dispersion);
    fit.converged = true;
  }
  finish_summary(fit, X, Eigen::VectorXd::Ones(X.rows()));
  return fit;
}

FitSummary fit_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, FitSummary fit, const GlmOptions& options) {
  const Family family = fit.family;
  const auto n = X.rows();

  Eigen::VectorXd mu(n);
  for (Eigen::Index i = 0; i < n; ++i)
    mu(i) = family == Family::binomial ? (y(i) + 0.5) / 2.0 : y(i) + 0.1;
  Eigen::VectorXd eta = family == Family::binomial
                            ? Eigen::VectorXd(mu.unaryExpr([](double p) { return std::log(p / (1.0 - p)); }))
                            : Eigen::VectorXd(mu.array().log().matrix());

  Eigen::VectorXd beta;  // empty until the first solve
  double dev = minus2loglik(y, eta, family);
  Eigen::VectorXd weights(n);
  bool converged = false;
  int iter = 0;

  auto working_weights = [&](const Eigen::VectorXd& m) {
    return family == Family::binomial ? Eigen::VectorXd(m.array() * (1.0 - m.array())) : m;
  };

  for (iter = 1; iter <= options.max_iterations; ++iter) {
    weights = working_weights(mu);
    const Eigen::VectorXd z = eta + (y - mu).cwiseQuotient(weights);
    const Eigen::MatrixXd info = X.transpose() * weights.asDiagonal() * X;
    Eigen::VectorXd next = Eigen::LDLT<Eigen::MatrixXd>(info).solve(X.transpose() * weights.cwiseProduct(z));
    Eigen::VectorXd next_eta = X * next;
    double next_dev = minus2loglik(y, next_eta, family);

    // Step halving when the deviance goes up.
    for (int half = 0; half < 20 && beta.size() != 0 && !(next_dev <= dev * (1.0 + 1e-12) + 1e-12); ++half) {
      next = 0.5 * (next + beta);
      next_eta = X * next;
      next_dev = minus2loglik(y, next_eta, family);
    }

    if (next_eta.cwiseAbs().maxCoeff() > options.separation_eta || !std::isfinite(next_dev)) {
      fit.warning = family == Family::binomial
                        ? "fitted probabilities numerically 0 or 1 (possible perfect separation)"
                        : "linear predictor diverged";
      if (beta.size() == 0) {
        beta = next;
        eta = next_eta;
        dev = next_dev;
      }
      break;
    }

    const double change = std::fabs(next_dev - dev) / (std::fabs(next_dev) + 0.1);
    beta = std::move(next);
    eta = std::move(next_eta);
    dev = next_dev;
    mu = mean_response(eta, family);
    if (change < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged && fit.warning.empty())
    fit.warning = "IRLS did not converge in " + std::to_string(options.max_iterations) + " iterations";

  fit.coefficients = beta;
  fit.minus2loglik = dev;
  fit.converged = converged;
  fit.iterations = std::min(iter, options.max_iterations);
  fit.dispersion = 1.0;
  mu = mean_response(eta, family);
  finish_summary(fit, X, working_weights(mu));
  return fit;
}

}  // namespace

FitSummary fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family,
                   std::span<const std::string> labels, const GlmOptions& options) {
  if (X.rows() != y.size()) throw ValidationError("design matrix and response have different row counts");
  if (X.cols() < 1) throw ValidationError("design matrix has no columns");
  if (X.rows() < X.cols())
    throw ValidationError("fewer samples (" + std::to_string(X.rows()) + ") than parameters (" +
                          std::to_string(X.cols()) + ")");
  if (!X.allFinite()) throw ValidationError("design matrix contains non-finite values");
  check_response(y, family);

  FitSummary fit;
  fit.family = family;
  fit.n = static_cast<std::size_t>(X.rows());
  fit.m = static_cast<std::size_t>(X.cols());
  fit.term_labels = default_labels(labels, X.cols());
  check_full_rank(X, fit.term_labels);

  if (family == Family::gaussian) return fit_gaussian(X, y, std::move(fit));
  return fit_irls(X, y, std::move(fit), options);
}

StoppingCriterion StoppingCriterion::parse(std::string_view text, double alpha) {
  if (text == "aic") return aic();
  if (text == "bic") return bic();
  if (text == "bonferroni") {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("bonferroni alpha must lie in (0, 1)");
    return bonferroni(alpha);
  }
  if (text.starts_with("steps=")) {
    const std::string digits(text.substr(6));
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("criterion '" + std::string(text) + "' needs a nonnegative step count");
    return fixed_steps(std::stoul(digits));
  }
  throw ValidationError("unknown criterion '" + std::string(text) + "' (expected aic, bic, bonferroni or steps=K)");
}

std::string StoppingCriterion::to_string() const {
  switch (kind) {
    case CriterionKind::aic: return "aic";
    case CriterionKind::bic: return "bic";
    case CriterionKind::bonferroni: return "bonferroni";
    case CriterionKind::fixed_steps: return "steps=" + std::to_string(max_steps);
  }
  return "bic";
}

double penalty_per_parameter(const StoppingCriterion& criterion, std::size_t n, std::size_t n_tests) {
  switch (criterion.kind) {
    case CriterionKind::aic: return 2.0;
    case CriterionKind::bic: return std::log(static_cast<double>(n));
    case CriterionKind::bonferroni:
      return chi2_quantile_df1(criterion.alpha / static_cast<double>(std::max<std::size_t>(n_tests, 1)));
    case CriterionKind::fixed_steps: return 0.0;
  }
  return 0.0;
}

double penalized_objective(const FitSummary& fit, const StoppingCriterion& criterion, std::size_t n_tests) {
  return fit.minus2loglik + penalty_per_parameter(criterion, fit.n, n_tests) * static_cast<double>(fit.m);
}

}  // namespace lrstep
