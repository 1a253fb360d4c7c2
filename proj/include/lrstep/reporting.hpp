#pragma once

#include "lrstep/composition.hpp"
#include "lrstep/dataset.hpp"
#include "lrstep/glm.hpp"
#include "lrstep/stepwise.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lrstep {

struct LogContrastEntry {
  PartIndex part = 0;
  std::string name;
  double coefficient = 0.0;
  std::optional<double> std_error;
  std::optional<double> p_value;
  std::optional<std::string> source_term;  // ALR the coefficient was read from
  std::optional<double> ci_low;
  std::optional<double> ci_high;

  double multiplicative_effect() const;
  double percent_effect() const;  // 100 * (exp(b) - 1)
  std::optional<double> effect_low() const;
  std::optional<double> effect_high() const;
};

/// Log-contrast over the parts of a common-denominator model, sorted by
/// descending coefficient.
struct LogContrastReport {
  std::vector<LogContrastEntry> entries;
  PartIndex denominator = 0;
  std::optional<std::pair<double, double>> levels;  // percentiles of the CI, e.g. (2.5, 97.5)
  std::size_t replicates = 0;                       // bootstrap fits used
  std::size_t failed_replicates = 0;

  const LogContrastEntry& at(PartIndex part) const;
  double coefficient_sum() const;
};

struct FittedModel {
  ModelTerms model;
  FitSummary fit;
};

/// Common denominator of the logratio terms, if there is one.
std::optional<PartIndex> common_denominator(std::span<const LogratioTerm> terms);

/// Numerator parts take their ALR coefficients; the denominator takes minus
/// their sum. Throws ValidationError when the terms do not share one
/// denominator.
LogContrastReport to_logcontrast(const FitSummary& fit, const ModelTerms& model,
                                 std::span<const std::string> part_names);

/// Refits a common-denominator model with every term re-based on new_den.
/// The term (old_den, new_den) carries the old denominator's log-contrast
/// coefficient together with its standard error and p-value.
FittedModel rerun_with_denominator(const SelectionSession& session, PartIndex new_den);
FittedModel rerun_with_denominator(const DatasetBundle& data, const ModelTerms& model, PartIndex new_den);

struct BootstrapOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  std::pair<double, double> levels{2.5, 97.5};
  bool stratified = false;  // resample within response classes
  double max_failure_fraction = 0.10;
  unsigned threads = 0;
};

/// Percentile bootstrap of the log-contrast coefficients. Point estimates are
/// the full-data values.
LogContrastReport bootstrap_logcontrast(const DatasetBundle& data, const ModelTerms& model,
                                        const BootstrapOptions& options = {});

/// Linear-interpolation sample quantile (R type 7); q in [0, 1].
double percentile(std::vector<double> values, double q);

struct ScreeStep {
  std::size_t step = 0;
  std::string term;
  double deviance_drop = 0.0;
  std::optional<double> incremental_percent;
  std::optional<double> cumulative_percent;
};

struct ScreeData {
  double baseline = 0.0;  // step-0 -2logLik
  std::optional<double> floor;  // -2logLik with a complete set of J-1 logratios
  std::optional<double> max_explainable;
  std::vector<ScreeStep> steps;
};

/// Deviance explained per step as a share of what a full logratio model
/// explains. The full model uses the star of logratios on part 0.
ScreeData scree(const SelectionSession& session);

/// DOT digraph, edges from denominator to numerator in selection order.
std::string export_graph(std::span<const LogratioTerm> terms, std::span<const std::string> part_names);

}  // namespace lrstep
