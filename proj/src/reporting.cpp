#include "lrstep/reporting.hpp"

#include "lrstep/error.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace lrstep {

double LogContrastEntry::multiplicative_effect() const { return std::exp(coefficient); }
double LogContrastEntry::percent_effect() const { return 100.0 * std::expm1(coefficient); }
std::optional<double> LogContrastEntry::effect_low() const {
  return ci_low ? std::optional<double>(std::exp(*ci_low)) : std::nullopt;
}
std::optional<double> LogContrastEntry::effect_high() const {
  return ci_high ? std::optional<double>(std::exp(*ci_high)) : std::nullopt;
}

const LogContrastEntry& LogContrastReport::at(PartIndex part) const {
  for (const auto& e : entries)
    if (e.part == part) return e;
  throw ValidationError("part " + std::to_string(part) + " is not in the log-contrast");
}

double LogContrastReport::coefficient_sum() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.coefficient;
  return s;
}

std::optional<PartIndex> common_denominator(std::span<const LogratioTerm> terms) {
  if (terms.empty()) return std::nullopt;
  const PartIndex den = terms.front().den;
  for (const auto& t : terms)
    if (t.den != den) return std::nullopt;
  return den;
}

namespace {

PartIndex require_common_denominator(const ModelTerms& model) {
  if (model.terms.empty()) throw ValidationError("model has no logratio terms");
  auto den = common_denominator(model.terms);
  if (!den) throw ValidationError("logratio terms do not share a common denominator (mixed denominators)");
  return *den;
}

// Log-contrast coefficients over the numerators followed by the denominator.
Eigen::VectorXd contrast_from_coefficients(const Eigen::VectorXd& coefficients, const ModelTerms& model) {
  const auto offset = static_cast<Eigen::Index>(1 + model.covariates.size());
  const auto k = static_cast<Eigen::Index>(model.terms.size());
  Eigen::VectorXd out(k + 1);
  out.head(k) = coefficients.segment(offset, k);
  out(k) = -out.head(k).sum();
  return out;
}

}  // namespace

LogContrastReport to_logcontrast(const FitSummary& fit, const ModelTerms& model,
                                 std::span<const std::string> part_names) {
  const PartIndex den = require_common_denominator(model);
  if (fit.coefficients.size() != static_cast<Eigen::Index>(model.parameter_count()))
    throw ValidationError("fit does not match the model terms");

  LogContrastReport report;
  report.denominator = den;
  const std::size_t offset = 1 + model.covariates.size();
  double sum = 0.0;
  for (std::size_t k = 0; k < model.terms.size(); ++k) {
    const auto idx = static_cast<Eigen::Index>(offset + k);
    const LogratioTerm t = model.terms[k];
    LogContrastEntry e;
    e.part = t.num;
    e.name = part_names[t.num];
    e.coefficient = fit.coefficients(idx);
    if (fit.std_errors.size() > idx) e.std_error = fit.std_errors(idx);
    if (fit.p_values.size() > idx) e.p_value = fit.p_values(idx);
    e.source_term = term_label(t, part_names);
    sum += e.coefficient;
    report.entries.push_back(std::move(e));
  }
  LogContrastEntry d;
  d.part = den;
  d.name = part_names[den];
  d.coefficient = -sum;
  report.entries.push_back(std::move(d));

  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const LogContrastEntry& a, const LogContrastEntry& b) { return a.coefficient > b.coefficient; });
  return report;
}

FittedModel rerun_with_denominator(const DatasetBundle& data, const ModelTerms& model, PartIndex new_den) {
  const PartIndex old_den = require_common_denominator(model);
  const bool in_subcomposition =
      new_den == old_den ||
      std::any_of(model.terms.begin(), model.terms.end(), [&](const LogratioTerm& t) { return t.num == new_den; });
  if (!in_subcomposition) {
    const std::string name = new_den < data.J() ? data.composition.parts()[new_den] : std::to_string(new_den);
    throw ValidationError("part '" + name + "' is not in the selected subcomposition");
  }

  FittedModel out{model, {}};
  for (auto& t : out.model.terms) t = (t.num == new_den) ? LogratioTerm{old_den, new_den} : LogratioTerm{t.num, new_den};
  out.fit = fit_glm(build_design(data, out.model), data.response, data.family, design_labels(data, out.model));
  return out;
}

FittedModel rerun_with_denominator(const SelectionSession& session, PartIndex new_den) {
  return rerun_with_denominator(session.data(), session.model(), new_den);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

LogContrastReport bootstrap_logcontrast(const DatasetBundle& data, const ModelTerms& model,
                                        const BootstrapOptions& options) {
  if (options.replicates < 100) throw ValidationError("bootstrap needs at least 100 replicates");
  const auto [lo_level, hi_level] = options.levels;
  if (!(lo_level >= 0.0 && lo_level < hi_level && hi_level <= 100.0))
    throw ValidationError("bootstrap percentile levels must satisfy 0 <= low < high <= 100");
  require_common_denominator(model);

  const Eigen::MatrixXd X = build_design(data, model);
  const auto labels = design_labels(data, model);
  const FitSummary full = fit_glm(X, data.response, data.family, labels);
  if (!full.converged) throw ConvergenceError("full-data fit did not converge: " + full.warning);
  LogContrastReport report = to_logcontrast(full, model, data.composition.parts());

  const std::size_t n = data.n();
  std::vector<std::vector<std::size_t>> strata;
  if (options.stratified) {
    std::map<double, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[data.response(static_cast<Eigen::Index>(i))].push_back(i);
    for (auto& [_, rows] : by_class) strata.push_back(std::move(rows));
  } else {
    strata.emplace_back(n);
    for (std::size_t i = 0; i < n; ++i) strata.front()[i] = i;
  }

  const std::size_t B = options.replicates;
  const auto k = static_cast<Eigen::Index>(model.terms.size() + 1);
  std::vector<std::optional<Eigen::VectorXd>> draws(B);
  std::vector<std::string> failures(B);

  detail::parallel_for(B, options.threads, [&](std::size_t b) {
    // Per-replicate stream so results do not depend on thread scheduling.
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::mt19937_64 rng(seq);
    Eigen::MatrixXd Xb(X.rows(), X.cols());
    Eigen::VectorXd yb(X.rows());
    Eigen::Index row = 0;
    for (const auto& group : strata) {
      std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
      for (std::size_t r = 0; r < group.size(); ++r) {
        const auto src = static_cast<Eigen::Index>(group[pick(rng)]);
        Xb.row(row) = X.row(src);
        yb(row) = data.response(src);
        ++row;
      }
    }
    try {
      const FitSummary fit = fit_glm(Xb, yb, data.family);
      if (!fit.converged) {
        failures[b] = fit.warning;
        return;
      }
      draws[b] = contrast_from_coefficients(fit.coefficients, model);
    } catch (const Error& e) {
      failures[b] = e.what();
    }
  });

  std::vector<Eigen::VectorXd> ok;
  std::map<std::string, std::size_t> reasons;
  for (std::size_t b = 0; b < B; ++b) {
    if (draws[b])
      ok.push_back(std::move(*draws[b]));
    else
      ++reasons[failures[b]];
  }
  report.replicates = ok.size();
  report.failed_replicates = B - ok.size();
  if (static_cast<double>(report.failed_replicates) > options.max_failure_fraction * static_cast<double>(B)) {
    std::ostringstream os;
    os << report.failed_replicates << " of " << B << " bootstrap fits failed:";
    for (const auto& [why, count] : reasons) os << " [" << count << "x] " << why << ";";
    throw ConvergenceError(os.str());
  }

  // Column c of the draws belongs to numerator c, the last to the denominator.
  std::vector<PartIndex> part_of(static_cast<std::size_t>(k));
  for (std::size_t c = 0; c < model.terms.size(); ++c) part_of[c] = model.terms[c].num;
  part_of.back() = model.terms.front().den;
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<double> column;
    column.reserve(ok.size());
    for (const auto& d : ok) column.push_back(d(c));
    for (auto& e : report.entries) {
      if (e.part != part_of[static_cast<std::size_t>(c)]) continue;
      e.ci_low = percentile(column, lo_level / 100.0);
      e.ci_high = percentile(column, hi_level / 100.0);
    }
  }
  report.levels = options.levels;
  return report;
}

ScreeData scree(const SelectionSession& session) {
  const auto& data = session.data();
  const auto& history = session.history();
  ScreeData out;
  out.baseline = history.front().minus2loglik;

  ModelTerms full;
  full.covariates = session.config().forced_covariates;
  full.terms = alr_terms(data.J(), 0);
  for (auto& t : full.terms) t = t.reversed();  // star on part 0: (0, j)
  if (data.n() > full.parameter_count()) {
    try {
      const FitSummary fit = fit_glm(build_design(data, full), data.response, data.family);
      if (fit.converged) out.floor = fit.minus2loglik;
    } catch (const Error&) {
    }
  }
  if (out.floor && out.baseline - *out.floor > 0.0) out.max_explainable = out.baseline - *out.floor;

  double cumulative = 0.0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    ScreeStep s;
    s.step = history[i].step;
    s.term = history[i].term ? term_label(*history[i].term, data.composition.parts()) : std::string();
    s.deviance_drop = history[i - 1].minus2loglik - history[i].minus2loglik;
    if (out.max_explainable) {
      s.incremental_percent = 100.0 * s.deviance_drop / *out.max_explainable;
      cumulative += *s.incremental_percent;
      s.cumulative_percent = cumulative;
    }
    out.steps.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string dot_id(std::string_view name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string export_graph(std::span<const LogratioTerm> terms, std::span<const std::string> part_names) {
  std::ostringstream os;
  os << "digraph logratios {\n";
  if (!terms.empty()) {
    const TermGraph graph = TermGraph::from_terms(terms);
    os << "  graph [comment=\"connected=" << (graph.connected() ? "true" : "false") << "\"];\n";
    for (PartIndex v : graph.vertices) os << "  " << dot_id(part_names[v]) << ";\n";
    std::size_t order = 1;
    for (const auto& e : graph.edges)
      os << "  " << dot_id(part_names[e.den]) << " -> " << dot_id(part_names[e.num]) << " [label=\"" << order++
         << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace lrstep
