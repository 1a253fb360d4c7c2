#include "lrstep/stepwise.hpp"

#include "lrstep/error.hpp"
#include "lrstep/union_find.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace lrstep {

std::string_view to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::unrestricted: return "unrestricted";
    case SelectionMethod::nonoverlapping: return "nonoverlapping";
    case SelectionMethod::alr_subcomposition: return "alr_subcomposition";
  }
  return "unrestricted";
}

SelectionMethod parse_method(std::string_view text) {
  if (text == "1" || text == "unrestricted") return SelectionMethod::unrestricted;
  if (text == "2" || text == "nonoverlapping") return SelectionMethod::nonoverlapping;
  if (text == "3" || text == "alr_subcomposition" || text == "alr") return SelectionMethod::alr_subcomposition;
  throw ValidationError("unknown method '" + std::string(text) + "' (expected 1, 2 or 3)");
}

namespace {

struct CandidateFit {
  bool ok = false;
  double minus2loglik = 0.0;
  double last_coefficient = 0.0;
  std::string reason;
};

std::vector<CandidateFit> fit_candidates(const DatasetBundle& data, Family family, const Eigen::MatrixXd& base,
                                         const std::vector<LogratioTerm>& terms, unsigned threads) {
  std::vector<CandidateFit> out(terms.size());
  detail::parallel_for(terms.size(), threads, [&](std::size_t i) {
    Eigen::MatrixXd X(base.rows(), base.cols() + 1);
    X.leftCols(base.cols()) = base;
    X.col(base.cols()) = lr_values(data.composition, terms[i]);
    try {
      const FitSummary fit = fit_glm(X, data.response, family);
      if (!fit.converged) {
        out[i].reason = fit.warning;
        return;
      }
      out[i] = {true, fit.minus2loglik, fit.coefficients(fit.coefficients.size() - 1), {}};
    } catch (const Error& e) {
      out[i].reason = e.what();
    }
  });
  return out;
}

bool tied(double a, double b) {
  return std::fabs(a - b) <= kTieTolerance * std::max(1.0, std::fabs(a));
}

// Ascending -2logLik; values within the tie tolerance of a group's first
// member are ordered by (low part, high part) instead.
void order_candidates(std::vector<CandidateEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const CandidateEntry& a, const CandidateEntry& b) {
    if (a.minus2loglik != b.minus2loglik) return a.minus2loglik < b.minus2loglik;
    return std::pair(a.term.low(), a.term.high()) < std::pair(b.term.low(), b.term.high());
  });
  for (std::size_t start = 0; start < entries.size();) {
    std::size_t end = start + 1;
    while (end < entries.size() && tied(entries[start].minus2loglik, entries[end].minus2loglik)) ++end;
    std::sort(entries.begin() + static_cast<std::ptrdiff_t>(start), entries.begin() + static_cast<std::ptrdiff_t>(end),
              [](const CandidateEntry& a, const CandidateEntry& b) {
                return std::pair(a.term.low(), a.term.high()) < std::pair(b.term.low(), b.term.high());
              });
    start = end;
  }
}

std::optional<std::string> rule_violation(SelectionMethod method, std::optional<PartIndex> den,
                                          std::span<const LogratioTerm> existing, LogratioTerm term, std::size_t J) {
  if (term.num == term.den || term.num >= J || term.den >= J) return "invalid_term";
  switch (method) {
    case SelectionMethod::unrestricted:
      if (creates_cycle(existing, term)) return "cycle";
      break;
    case SelectionMethod::nonoverlapping:
      for (const auto& t : existing)
        if (overlaps(t, term)) return "overlap";
      break;
    case SelectionMethod::alr_subcomposition:
      if (den && term.den != *den) return "common_denominator";
      for (const auto& t : existing)
        if (t.num == term.num) return "part_in_use";
      break;
  }
  return std::nullopt;
}

std::string describe_rule(const std::string& rule) {
  if (rule == "invalid_term") return "a term needs two distinct known parts";
  if (rule == "cycle") return "it closes a cycle with the terms already in the model (redundant logratio)";
  if (rule == "overlap") return "it shares a part with a term already in the model";
  if (rule == "common_denominator") return "it does not use the fixed common denominator";
  if (rule == "part_in_use") return "its numerator part is already in the subcomposition";
  if (rule == "stopped") return "the session has stopped";
  return rule;
}

}  // namespace

SelectionSession::SelectionSession(std::shared_ptr<const DatasetBundle> data, SessionConfig config)
    : data_(std::move(data)), config_(std::move(config)) {}

SelectionSession SelectionSession::init(std::shared_ptr<const DatasetBundle> data, SessionConfig config) {
  if (!data) throw ValidationError("session needs a dataset");
  if (data->family != config.family)
    throw ValidationError("dataset was validated for family " + std::string(to_string(data->family)) +
                          " but the session uses " + std::string(to_string(config.family)));
  SelectionSession s(std::move(data), std::move(config));
  const auto& parts = s.data_->composition.parts();
  const std::size_t J = s.data_->J();

  std::set<std::size_t> seen_cov;
  for (std::size_t c : s.config_.forced_covariates) {
    if (c >= s.data_->covariate_names.size())
      throw ValidationError("forced covariate index " + std::to_string(c) + " out of range");
    if (!seen_cov.insert(c).second)
      throw ValidationError("covariate '" + s.data_->covariate_names[c] + "' forced twice");
  }

  if (s.config_.method == SelectionMethod::alr_subcomposition && !s.config_.forced_terms.empty())
    s.alr_denominator_ = s.config_.forced_terms.front().den;
  std::vector<LogratioTerm> accepted;
  for (const auto& t : s.config_.forced_terms) {
    if (auto rule = rule_violation(s.config_.method, s.alr_denominator_, accepted, t, J)) {
      const std::string label = (t.num < J && t.den < J) ? term_label(t, parts) : std::string("?");
      std::string with;
      if (*rule == "overlap")
        for (const auto& a : accepted)
          if (overlaps(a, t)) with += " (conflicts with '" + term_label(a, parts) + "')";
      throw EligibilityError(*rule, "forced term '" + label + "' is not eligible under method " +
                                        std::to_string(static_cast<int>(s.config_.method)) + ": " +
                                        describe_rule(*rule) + with);
    }
    accepted.push_back(t);
  }

  s.refit();
  if (!s.fit_.converged) throw ConvergenceError("step-0 model did not converge: " + s.fit_.warning);
  s.history_.push_back({0, std::nullopt, s.fit_.minus2loglik, s.objective(), false, false});
  return s;
}

std::vector<LogratioTerm> SelectionSession::all_terms() const {
  std::vector<LogratioTerm> terms = config_.forced_terms;
  terms.insert(terms.end(), selected_.begin(), selected_.end());
  return terms;
}

ModelTerms SelectionSession::model() const { return {config_.forced_covariates, all_terms()}; }

double SelectionSession::penalty_per_parameter() const {
  return lrstep::penalty_per_parameter(config_.criterion, data_->n(), n_tests());
}

double SelectionSession::objective() const { return penalized_objective(fit_, config_.criterion, n_tests()); }

FitSummary SelectionSession::fit_model(const ModelTerms& model) const {
  return fit_glm(build_design(*data_, model), data_->response, config_.family, design_labels(*data_, model));
}

void SelectionSession::refit() { fit_ = fit_model(model()); }

std::vector<LogratioTerm> SelectionSession::eligible_terms() const {
  const std::size_t J = data_->J();
  const auto terms = all_terms();
  std::vector<LogratioTerm> out;
  switch (config_.method) {
    case SelectionMethod::unrestricted: {
      UnionFind uf(J);
      for (const auto& t : terms) uf.unite(t.num, t.den);
      for (PartIndex a = 0; a < J; ++a)
        for (PartIndex b = a + 1; b < J; ++b)
          if (!uf.connected(a, b)) out.push_back({a, b});
      break;
    }
    case SelectionMethod::nonoverlapping: {
      std::vector<bool> used(J, false);
      for (const auto& t : terms) used[t.num] = used[t.den] = true;
      for (PartIndex a = 0; a < J; ++a)
        for (PartIndex b = a + 1; b < J; ++b)
          if (!used[a] && !used[b]) out.push_back({a, b});
      break;
    }
    case SelectionMethod::alr_subcomposition: {
      if (!alr_denominator_) {
        for (PartIndex a = 0; a < J; ++a)
          for (PartIndex b = a + 1; b < J; ++b) out.push_back({a, b});
        break;
      }
      std::vector<bool> used(J, false);
      used[*alr_denominator_] = true;
      for (const auto& t : terms) used[t.num] = true;
      for (PartIndex j = 0; j < J; ++j)
        if (!used[j]) out.push_back({j, *alr_denominator_});
      break;
    }
  }
  return out;
}

std::optional<std::string> SelectionSession::ineligibility(LogratioTerm term) const {
  const auto terms = all_terms();
  return rule_violation(config_.method, alr_denominator_, terms, term, data_->J());
}

CandidateRanking SelectionSession::rank_candidates(std::size_t top_k) const {
  CandidateRanking ranking;
  ranking.current_minus2loglik = fit_.minus2loglik;
  ranking.current_objective = objective();

  const auto eligible = eligible_terms();
  ranking.eligible_count = eligible.size();
  ranking.exhausted = eligible.empty();
  if (eligible.empty()) return ranking;

  const bool fixed_orientation = config_.method == SelectionMethod::alr_subcomposition && alr_denominator_;
  const Eigen::MatrixXd base = build_design(*data_, model());
  const auto fits = fit_candidates(*data_, config_.family, base, eligible, config_.threads);
  const double penalty = penalty_per_parameter();
  const double m_next = static_cast<double>(fit_.m + 1);

  for (std::size_t i = 0; i < eligible.size(); ++i) {
    if (!fits[i].ok) {
      ranking.diagnostics.push_back({eligible[i], fits[i].reason});
      continue;
    }
    CandidateEntry e;
    e.term = (!fixed_orientation && fits[i].last_coefficient < 0.0) ? eligible[i].reversed() : eligible[i];
    e.minus2loglik = fits[i].minus2loglik;
    e.delta_deviance = fit_.minus2loglik - e.minus2loglik;
    e.objective = e.minus2loglik + penalty * m_next;
    e.would_stop = e.objective >= ranking.current_objective;
    ranking.entries.push_back(e);
  }
  order_candidates(ranking.entries);
  if (ranking.entries.size() > top_k) ranking.entries.resize(top_k);
  return ranking;
}

StepOutcome SelectionSession::step(std::optional<LogratioTerm> chosen, bool override_stop) {
  if (stopped_ && !override_stop) return StepOutcome::stopped;

  if (chosen) {
    if (auto rule = ineligibility(*chosen)) {
      const std::size_t J = data_->J();
      const std::string label =
          (chosen->num < J && chosen->den < J) ? term_label(*chosen, data_->composition.parts()) : "?";
      throw EligibilityError(*rule, "term '" + label + "' is not eligible: " + describe_rule(*rule));
    }
    ModelTerms next = model();
    next.terms.push_back(*chosen);
    const FitSummary trial = fit_model(next);
    if (!trial.converged)
      throw ConvergenceError("model with '" + term_label(*chosen, data_->composition.parts()) +
                             "' did not converge: " + trial.warning);
    const double trial_objective = penalized_objective(trial, config_.criterion, n_tests());
    const bool worse = trial_objective >= objective();
    if (worse && !override_stop) {
      stopped_ = true;
      return StepOutcome::stopped;
    }
    append(*chosen, true, worse);
    return StepOutcome::added;
  }

  const CandidateRanking ranking = rank_candidates(1);
  if (ranking.entries.empty()) {
    stopped_ = true;
    return StepOutcome::exhausted;
  }
  const CandidateEntry& best = ranking.entries.front();
  if (best.would_stop && !override_stop) {
    stopped_ = true;
    return StepOutcome::stopped;
  }
  append(best.term, false, best.would_stop);
  return StepOutcome::added;
}

void SelectionSession::append(LogratioTerm term, bool expert, bool override_stop) {
  selected_.push_back(term);
  refit();
  stopped_ = false;
  history_.push_back({history_.size(), term, fit_.minus2loglik, objective(), expert, override_stop});
  if (config_.method == SelectionMethod::alr_subcomposition && !alr_denominator_) {
    if (expert)
      alr_denominator_ = term.den;
    else
      resolve_alr_denominator();
  }
}

// The first logratio fits identically in both orientations, so the
// denominator is the part whose best second step has the lower -2logLik
// (lower part index on ties).
void SelectionSession::resolve_alr_denominator() {
  const LogratioTerm first = selected_.back();
  const std::size_t J = data_->J();

  std::optional<double> best[2];
  const PartIndex options[2] = {std::min(first.num, first.den), std::max(first.num, first.den)};
  for (int k = 0; k < 2; ++k) {
    const PartIndex den = options[k];
    const PartIndex other = first.num + first.den - den;
    ModelTerms base_model = model();
    base_model.terms.back() = {other, den};
    std::vector<LogratioTerm> cands;
    for (PartIndex j = 0; j < J; ++j)
      if (j != den && j != other) cands.push_back({j, den});
    const auto fits = fit_candidates(*data_, config_.family, build_design(*data_, base_model), cands, config_.threads);
    for (const auto& f : fits)
      if (f.ok && (!best[k] || f.minus2loglik < *best[k])) best[k] = f.minus2loglik;
  }

  int pick = 0;
  if (best[0] && best[1])
    pick = (!tied(*best[0], *best[1]) && *best[1] < *best[0]) ? 1 : 0;
  else if (best[1])
    pick = 1;

  const PartIndex den = options[pick];
  alr_denominator_ = den;
  const LogratioTerm oriented{first.num + first.den - den, den};
  selected_.back() = oriented;
  history_.back().term = oriented;
  refit();
}

void SelectionSession::run() {
  while (!stopped_) {
    if (config_.criterion.kind == CriterionKind::fixed_steps && selected_.size() >= config_.criterion.max_steps) break;
    if (step() != StepOutcome::added) break;
  }
}

bool SelectionSession::undo() {
  if (selected_.empty()) return false;
  selected_.pop_back();
  history_.pop_back();
  if (config_.method == SelectionMethod::alr_subcomposition && selected_.empty() && config_.forced_terms.empty())
    alr_denominator_.reset();
  refit();
  stopped_ = false;
  return true;
}

SelectionSession SelectionSession::replay(std::shared_ptr<const DatasetBundle> data, SessionConfig config,
                                          const std::vector<HistoryEntry>& choices, bool stopped) {
  SelectionSession s = init(std::move(data), std::move(config));
  for (const auto& entry : choices) {
    if (!entry.term) continue;
    const LogratioTerm term = *entry.term;
    if (auto rule = s.ineligibility(term)) {
      const std::size_t J = s.data_->J();
      const std::string label = (term.num < J && term.den < J) ? term_label(term, s.data_->composition.parts()) : "?";
      throw EligibilityError(*rule, "recorded term '" + label + "' is not eligible: " + describe_rule(*rule));
    }
    if (s.config_.method == SelectionMethod::alr_subcomposition && !s.alr_denominator_) s.alr_denominator_ = term.den;
    s.append(term, entry.expert_choice, entry.override_stop);
  }
  s.stopped_ = stopped;
  return s;
}

}  // namespace lrstep
