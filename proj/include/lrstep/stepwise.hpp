#pragma once

#include "lrstep/composition.hpp"
#include "lrstep/dataset.hpp"
#include "lrstep/glm.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lrstep {

enum class SelectionMethod {
  unrestricted = 1,        // any logratio that keeps the term graph acyclic
  nonoverlapping = 2,      // no part shared between terms
  alr_subcomposition = 3,  // common denominator fixed after the first step
};

std::string_view to_string(SelectionMethod method);
/// Accepts 1/2/3 or the enum names.
SelectionMethod parse_method(std::string_view text);

struct SessionConfig {
  Family family = Family::gaussian;
  SelectionMethod method = SelectionMethod::unrestricted;
  StoppingCriterion criterion = StoppingCriterion::bic();
  std::vector<LogratioTerm> forced_terms;
  std::vector<std::size_t> forced_covariates;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // candidate scan workers, 0 = hardware concurrency
};

struct HistoryEntry {
  std::size_t step = 0;
  std::optional<LogratioTerm> term;  // empty for the step-0 model
  double minus2loglik = 0.0;
  double objective = 0.0;            // penalized, after this step
  bool expert_choice = false;        // term picked by the user rather than rank 1
  bool override_stop = false;        // added although it did not improve the objective
};

struct CandidateEntry {
  LogratioTerm term;
  double minus2loglik = 0.0;
  double delta_deviance = 0.0;  // current -2logLik minus candidate -2logLik
  double objective = 0.0;
  bool would_stop = false;
};

struct CandidateDiagnostic {
  LogratioTerm term;
  std::string reason;
};

struct CandidateRanking {
  std::vector<CandidateEntry> entries;  // ascending -2logLik
  std::size_t eligible_count = 0;
  std::vector<CandidateDiagnostic> diagnostics;
  double current_minus2loglik = 0.0;
  double current_objective = 0.0;
  bool exhausted = false;  // no eligible term left
};

enum class StepOutcome { added, stopped, exhausted };

/// Mutable state of one forward-stepwise selection.
///
/// Copies are independent snapshots; the dataset is shared and immutable.
/// Forced terms and covariates are part of every model including step 0
/// and are never removed by undo().
class SelectionSession {
 public:
  /// Fits the step-0 model. Throws EligibilityError when the forced terms
  /// break the method's rule and ValidationError for bad indices.
  static SelectionSession init(std::shared_ptr<const DatasetBundle> data, SessionConfig config);

  const DatasetBundle& data() const noexcept { return *data_; }
  std::shared_ptr<const DatasetBundle> data_ptr() const noexcept { return data_; }
  const SessionConfig& config() const noexcept { return config_; }
  SelectionMethod method() const noexcept { return config_.method; }

  /// Terms added after step 0, in entry order.
  const std::vector<LogratioTerm>& selected() const noexcept { return selected_; }
  /// Forced terms followed by selected terms.
  std::vector<LogratioTerm> all_terms() const;
  ModelTerms model() const;
  const FitSummary& fit() const noexcept { return fit_; }
  const std::vector<HistoryEntry>& history() const noexcept { return history_; }
  std::optional<PartIndex> alr_denominator() const noexcept { return alr_denominator_; }
  bool stopped() const noexcept { return stopped_; }

  /// Bonferroni divisor, J - 1.
  std::size_t n_tests() const noexcept { return data_->J() - 1; }
  double penalty_per_parameter() const;
  double objective() const;

  std::vector<LogratioTerm> eligible_terms() const;
  /// Empty when the term is eligible, otherwise the violated rule name.
  std::optional<std::string> ineligibility(LogratioTerm term) const;

  CandidateRanking rank_candidates(std::size_t top_k) const;

  /// Adds the best candidate, or `chosen` when given. Without
  /// override_stop a term that does not lower the penalized objective stops
  /// the session instead of being added. Throws EligibilityError for an
  /// ineligible choice.
  StepOutcome step(std::optional<LogratioTerm> chosen = std::nullopt, bool override_stop = false);

  /// Automatic steps until the criterion stops, candidates run out, or a
  /// fixed step budget is reached.
  void run();

  /// Removes the last selected term. Returns false at step 0.
  bool undo();

  /// Rebuilds a session from recorded choices without re-ranking. Each term
  /// is checked for eligibility. For method 3 the first term's denominator
  /// becomes the common denominator.
  static SelectionSession replay(std::shared_ptr<const DatasetBundle> data, SessionConfig config,
                                 const std::vector<HistoryEntry>& choices, bool stopped);

 private:
  SelectionSession(std::shared_ptr<const DatasetBundle> data, SessionConfig config);

  FitSummary fit_model(const ModelTerms& model) const;
  void refit();
  void append(LogratioTerm term, bool expert, bool override_stop);
  void resolve_alr_denominator();

  std::shared_ptr<const DatasetBundle> data_;
  SessionConfig config_;
  std::vector<LogratioTerm> selected_;
  std::vector<HistoryEntry> history_;
  std::optional<PartIndex> alr_denominator_;
  FitSummary fit_;
  bool stopped_ = false;
};

/// Relative tolerance under which two -2logLik values count as tied.
inline constexpr double kTieTolerance = 1e-9;

}  // namespace lrstep
