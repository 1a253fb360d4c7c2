#pragma once

// Synthetic data and independent oracles shared by the test binaries.

#include "lrstep/dataset.hpp"
#include "lrstep/stepwise.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lrstep::testing {

inline std::vector<std::string> part_names(std::size_t J) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < J; ++j) names.push_back("P" + std::to_string(j));
  return names;
}

inline DatasetBundle make_bundle(const Eigen::MatrixXd& samples, const Eigen::VectorXd& y, Family family,
                                 Eigen::MatrixXd covariates = {}, std::vector<std::string> cov_names = {}) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) ids.push_back("s" + std::to_string(i + 1));
  DatasetBundle b{CompositionTable(part_names(static_cast<std::size_t>(samples.cols())), samples, ids), y};
  b.family = family;
  b.covariates = covariates.size() ? covariates : Eigen::MatrixXd(samples.rows(), 0);
  b.covariate_names = std::move(cov_names);
  b.provenance.source.family = family;
  return b;
}

struct TrueTerm {
  LogratioTerm term;
  double beta;
};

// Lognormal parts; the response follows the given logratio effects.
inline DatasetBundle synth(std::mt19937_64& rng, std::size_t n, std::size_t J, Family family,
                           const std::vector<TrueTerm>& effects, double intercept = 0.0, double noise_sd = 1.0) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, J);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < J; ++j) x(i, j) = std::exp(z(rng));
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = intercept;
    for (const auto& e : effects) eta += e.beta * std::log(x(i, e.term.num) / x(i, e.term.den));
    switch (family) {
      case Family::gaussian: y(i) = eta + noise_sd * z(rng); break;
      case Family::binomial: {
        std::bernoulli_distribution b(1.0 / (1.0 + std::exp(-eta)));
        y(i) = b(rng) ? 1.0 : 0.0;
        break;
      }
      case Family::poisson: {
        std::poisson_distribution<int> p(std::exp(eta));
        y(i) = p(rng);
        break;
      }
    }
  }
  return make_bundle(x, y, family);
}

inline std::shared_ptr<const DatasetBundle> share(DatasetBundle b) {
  return std::make_shared<const DatasetBundle>(std::move(b));
}

// Rank by Gaussian elimination with partial pivoting.
inline int rank_oracle(Eigen::MatrixXd a, double tol = 1e-9) {
  int rank = 0;
  const auto rows = a.rows();
  const auto cols = a.cols();
  for (Eigen::Index c = 0; c < cols && rank < rows; ++c) {
    Eigen::Index pivot = rank;
    for (Eigen::Index r = rank; r < rows; ++r)
      if (std::abs(a(r, c)) > std::abs(a(pivot, c))) pivot = r;
    if (std::abs(a(pivot, c)) < tol) continue;
    a.row(rank).swap(a.row(pivot));
    for (Eigen::Index r = rank + 1; r < rows; ++r) a.row(r) -= a(r, c) / a(rank, c) * a.row(rank);
    ++rank;
  }
  return rank;
}

// Rows are the alpha vectors of the terms.
inline Eigen::MatrixXd alpha_rows(const std::vector<LogratioTerm>& terms, std::size_t J) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(terms.size()), static_cast<Eigen::Index>(J));
  for (std::size_t k = 0; k < terms.size(); ++k) {
    a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(terms[k].num)) += 1.0;
    a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(terms[k].den)) -= 1.0;
  }
  return a;
}

// Logistic regression by plain Newton-Raphson on the log-likelihood.
inline Eigen::VectorXd newton_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double* m2ll = nullptr) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = X.transpose() * (y - p);
    const Eigen::MatrixXd hess = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd delta = hess.ldlt().solve(grad);
    b += delta;
    if (delta.norm() < 1e-12) break;
  }
  if (m2ll) {
    const Eigen::VectorXd eta = X * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - std::log1p(std::exp(eta(i)));
    *m2ll = -2.0 * ll;
  }
  return b;
}

// Gaussian maximum likelihood -2logLik of a least-squares fit.
inline double ols_minus2loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
  const double rss = (y - X * b).squaredNorm();
  const double n = static_cast<double>(y.size());
  return n * (std::log(2.0 * M_PI * rss / n) + 1.0);
}

// -2logLik of the session's model plus one candidate, computed without the
// library's GLM code.
inline double oracle_minus2loglik(const DatasetBundle& data, const ModelTerms& base, LogratioTerm candidate) {
  const auto n = static_cast<Eigen::Index>(data.n());
  std::vector<Eigen::VectorXd> cols{Eigen::VectorXd::Ones(n)};
  for (std::size_t c : base.covariates) cols.push_back(data.covariates.col(static_cast<Eigen::Index>(c)));
  auto lr = [&](LogratioTerm t) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      v(i) = std::log(data.composition.samples()(i, static_cast<Eigen::Index>(t.num))) -
             std::log(data.composition.samples()(i, static_cast<Eigen::Index>(t.den)));
    return v;
  };
  for (const auto& t : base.terms) cols.push_back(lr(t));
  cols.push_back(lr(candidate));
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) X.col(static_cast<Eigen::Index>(k)) = cols[k];
  if (data.family == Family::gaussian) return ols_minus2loglik(X, data.response);
  double m2ll = 0.0;
  newton_logistic(X, data.response, &m2ll);
  return m2ll;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lrstep_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string write_csv(const DatasetBundle& b, const std::string& path) {
  std::ofstream f(path);
  write_dataset(b, f);
  return path;
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace lrstep::testing
