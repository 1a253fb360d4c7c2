#pragma once

#include "lrstep/composition.hpp"
#include "lrstep/glm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lrstep {

enum class ZeroPolicy { strict, multiplicative };

std::string_view to_string(ZeroPolicy policy);
ZeroPolicy parse_zero_policy(std::string_view text);

struct SplitSpec {
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 1;
};

/// Where a bundle came from and how to rebuild it.
struct LoadOptions {
  std::string composition_path;
  // Name of a column in the composition file, or a path to a CSV whose
  // first column is the sample id and second column is the response.
  std::string response;
  std::vector<std::string> covariates;
  Family family = Family::gaussian;
  ZeroPolicy zero_policy = ZeroPolicy::multiplicative;
  double zero_fraction = 0.65;
};

struct Provenance {
  LoadOptions source;
  std::size_t zeros_replaced = 0;
  // Set when the bundle is one side of a holdout split.
  std::optional<SplitSpec> split;
  std::string partition;  // "train" or "holdout" when split is set
};

struct DatasetBundle {
  CompositionTable composition;
  Eigen::VectorXd response;
  std::string response_name = "response";
  Eigen::MatrixXd covariates;  // n x C, C may be 0
  std::vector<std::string> covariate_names;
  Family family = Family::gaussian;
  Provenance provenance;

  std::size_t n() const noexcept { return composition.n(); }
  std::size_t J() const noexcept { return composition.J(); }
  std::size_t covariate_index(std::string_view name) const;
  DatasetBundle select_rows(std::span<const std::size_t> rows) const;
};

/// Validates shape and response domain; throws ValidationError.
void validate(const DatasetBundle& bundle);

/// Reads the files named in options.
DatasetBundle load_dataset(const LoadOptions& options);

/// Same as load_dataset but from already opened streams. response_stream is
/// only consulted when options.response is not a column of the composition.
DatasetBundle parse_dataset(std::istream& composition, std::istream* response_stream, const LoadOptions& options);

/// One CSV holding id, parts, covariates and the response column, written
/// with shortest round-trip number formatting.
void write_dataset(const DatasetBundle& bundle, std::ostream& out);

std::pair<DatasetBundle, DatasetBundle> split_holdout(const DatasetBundle& bundle, const SplitSpec& spec);

/// Predictors of a model beyond the intercept: covariates first, then
/// logratio terms in entry order.
struct ModelTerms {
  std::vector<std::size_t> covariates;
  std::vector<LogratioTerm> terms;

  std::size_t parameter_count() const { return 1 + covariates.size() + terms.size(); }
};

Eigen::MatrixXd build_design(const DatasetBundle& data, const ModelTerms& model);
std::vector<std::string> design_labels(const DatasetBundle& data, const ModelTerms& model);

struct HoldoutMetrics {
  std::size_t n = 0;
  double deviance = 0.0;  // -2logLik under the fitted coefficients
  std::optional<double> accuracy;
  std::optional<double> auc;
};

/// Scores a fitted model on new rows. Parts and covariates are matched by
/// name against the training bundle.
HoldoutMetrics evaluate_holdout(const FitSummary& fit, const ModelTerms& model, const DatasetBundle& training,
                                const DatasetBundle& holdout);

/// Area under the ROC curve with tied scores counted as one half.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

}  // namespace lrstep
