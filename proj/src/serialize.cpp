#include "lrstep/serialize.hpp"

#include "csv.hpp"
#include "lrstep/error.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace lrstep {

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

template <class T>
T field(const Json& doc, const char* key) {
  if (!doc.contains(key)) throw ValidationError(std::string("session file lacks '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("session file field '") + key + "': " + e.what());
  }
}

Json history_entry_json(const HistoryEntry& h, std::span<const std::string> parts) {
  return Json{{"step", h.step},
              {"term", h.term ? Json(term_label(*h.term, parts)) : Json(nullptr)},
              {"minus2loglik", number_or_null(h.minus2loglik)},
              {"objective", number_or_null(h.objective)},
              {"expert_choice", h.expert_choice},
              {"override_stop", h.override_stop}};
}

}  // namespace

Json load_options_to_json(const LoadOptions& o) {
  return Json{{"composition_path", o.composition_path},
              {"response", o.response},
              {"covariates", o.covariates},
              {"family", to_string(o.family)},
              {"zero_policy", to_string(o.zero_policy)},
              {"zero_fraction", o.zero_fraction}};
}

LoadOptions load_options_from_json(const Json& doc) {
  LoadOptions o;
  o.composition_path = field<std::string>(doc, "composition_path");
  o.response = field<std::string>(doc, "response");
  o.covariates = field<std::vector<std::string>>(doc, "covariates");
  o.family = parse_family(field<std::string>(doc, "family"));
  o.zero_policy = parse_zero_policy(field<std::string>(doc, "zero_policy"));
  o.zero_fraction = field<double>(doc, "zero_fraction");
  return o;
}

Json session_to_json(const SelectionSession& session) {
  const auto& data = session.data();
  const auto& parts = data.composition.parts();
  const auto& cfg = session.config();

  Json dataset = load_options_to_json(data.provenance.source);
  if (data.provenance.split) {
    dataset["split"] = Json{{"train_fraction", data.provenance.split->train_fraction},
                            {"seed", data.provenance.split->seed},
                            {"partition", data.provenance.partition}};
  } else {
    dataset["split"] = nullptr;
  }

  Json forced_terms = Json::array();
  for (const auto& t : cfg.forced_terms) forced_terms.push_back(term_label(t, parts));
  Json forced_covs = Json::array();
  for (std::size_t c : cfg.forced_covariates) forced_covs.push_back(data.covariate_names[c]);

  Json history = Json::array();
  for (const auto& h : session.history()) history.push_back(history_entry_json(h, parts));

  return Json{{"format", "lrstep-session"},
              {"format_version", kSessionFormatVersion},
              {"dataset", dataset},
              {"config",
               {{"family", to_string(cfg.family)},
                {"method", static_cast<int>(cfg.method)},
                {"criterion", cfg.criterion.to_string()},
                {"alpha", cfg.criterion.alpha},
                {"forced_terms", forced_terms},
                {"forced_covariates", forced_covs},
                {"seed", cfg.seed}}},
              {"history", history},
              {"alr_denominator",
               session.alr_denominator() ? Json(parts[*session.alr_denominator()]) : Json(nullptr)},
              {"stopped", session.stopped()}};
}

DatasetBundle load_session_dataset(const Json& doc) {
  if (!doc.contains("dataset")) throw ValidationError("session file lacks 'dataset'");
  const Json& ds = doc.at("dataset");
  DatasetBundle bundle = load_dataset(load_options_from_json(ds));
  if (ds.contains("split") && !ds.at("split").is_null()) {
    const Json& sp = ds.at("split");
    SplitSpec spec{field<double>(sp, "train_fraction"), field<std::uint64_t>(sp, "seed")};
    auto [train, holdout] = split_holdout(bundle, spec);
    return field<std::string>(sp, "partition") == "holdout" ? std::move(holdout) : std::move(train);
  }
  return bundle;
}

SelectionSession session_from_json(const Json& doc, std::shared_ptr<const DatasetBundle> data) {
  if (!doc.is_object() || doc.value("format", std::string()) != "lrstep-session")
    throw ValidationError("not a session file");
  if (doc.value("format_version", 0) > kSessionFormatVersion)
    throw ValidationError("session file was written by a newer version");
  if (!data) data = std::make_shared<const DatasetBundle>(load_session_dataset(doc));

  const Json& c = doc.at("config");
  SessionConfig cfg;
  cfg.family = parse_family(field<std::string>(c, "family"));
  cfg.method = parse_method(std::to_string(field<int>(c, "method")));
  cfg.criterion = StoppingCriterion::parse(field<std::string>(c, "criterion"), field<double>(c, "alpha"));
  for (const auto& label : field<std::vector<std::string>>(c, "forced_terms"))
    cfg.forced_terms.push_back(parse_term(label, data->composition));
  for (const auto& name : field<std::vector<std::string>>(c, "forced_covariates"))
    cfg.forced_covariates.push_back(data->covariate_index(name));
  cfg.seed = field<std::uint64_t>(c, "seed");

  std::vector<HistoryEntry> choices;
  for (const auto& h : doc.at("history")) {
    if (h.at("term").is_null()) continue;
    HistoryEntry e;
    e.step = h.value("step", std::size_t{0});
    e.term = parse_term(h.at("term").get<std::string>(), data->composition);
    e.expert_choice = h.value("expert_choice", false);
    e.override_stop = h.value("override_stop", false);
    choices.push_back(e);
  }
  SelectionSession session = SelectionSession::replay(data, cfg, choices, doc.value("stopped", false));

  const Json& den = doc.at("alr_denominator");
  const auto expected = den.is_null() ? std::optional<PartIndex>() : data->composition.find_part(den.get<std::string>());
  if (expected != session.alr_denominator())
    throw ValidationError("session file denominator does not match the replayed selection");
  return session;
}

Json fit_to_json(const FitSummary& fit) {
  Json rows = Json::array();
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    rows.push_back(Json{{"term", fit.term_labels[static_cast<std::size_t>(j)]},
                        {"estimate", number_or_null(fit.coefficients(j))},
                        {"se", number_or_null(fit.std_errors(j))},
                        {"p_value", number_or_null(fit.p_values(j))}});
  }
  return Json{{"family", to_string(fit.family)},
              {"n", fit.n},
              {"m", fit.m},
              {"minus2loglik", number_or_null(fit.minus2loglik)},
              {"dispersion", fit.dispersion},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"warning", fit.warning},
              {"coefficients", rows}};
}

Json ranking_to_json(const CandidateRanking& ranking, std::span<const std::string> parts) {
  Json entries = Json::array();
  std::size_t rank = 1;
  for (const auto& e : ranking.entries) {
    entries.push_back(Json{{"rank", rank++},
                           {"term", term_label(e.term, parts)},
                           {"minus2loglik", e.minus2loglik},
                           {"delta_deviance", e.delta_deviance},
                           {"objective", e.objective},
                           {"would_stop", e.would_stop}});
  }
  Json diagnostics = Json::array();
  for (const auto& d : ranking.diagnostics)
    diagnostics.push_back(Json{{"term", term_label(d.term, parts)}, {"reason", d.reason}});
  return Json{{"current_minus2loglik", ranking.current_minus2loglik},
              {"current_objective", ranking.current_objective},
              {"eligible_count", ranking.eligible_count},
              {"exhausted", ranking.exhausted},
              {"entries", entries},
              {"diagnostics", diagnostics}};
}

Json logcontrast_to_json(const LogContrastReport& report) {
  Json rows = Json::array();
  for (const auto& e : report.entries) {
    rows.push_back(Json{{"part", e.name},
                        {"coefficient", e.coefficient},
                        {"se", optional_number(e.std_error)},
                        {"p_value", optional_number(e.p_value)},
                        {"source_term", e.source_term ? Json(*e.source_term) : Json(nullptr)},
                        {"multiplicative_effect", e.multiplicative_effect()},
                        {"percent_effect", e.percent_effect()},
                        {"ci_low", optional_number(e.ci_low)},
                        {"ci_high", optional_number(e.ci_high)},
                        {"effect_low", optional_number(e.effect_low())},
                        {"effect_high", optional_number(e.effect_high())}});
  }
  return rows;
}

Json scree_to_json(const ScreeData& scree) {
  Json steps = Json::array();
  for (const auto& s : scree.steps) {
    steps.push_back(Json{{"step", s.step},
                         {"term", s.term},
                         {"deviance_drop", s.deviance_drop},
                         {"incremental_percent", optional_number(s.incremental_percent)},
                         {"cumulative_percent", optional_number(s.cumulative_percent)}});
  }
  return Json{{"baseline", scree.baseline},
              {"floor", optional_number(scree.floor)},
              {"max_explainable", optional_number(scree.max_explainable)},
              {"steps", steps}};
}

Json holdout_to_json(const HoldoutMetrics& m) {
  return Json{{"n", m.n},
              {"holdout_deviance", m.deviance},
              {"accuracy", optional_number(m.accuracy)},
              {"auc", optional_number(m.auc)}};
}

std::optional<LogContrastReport> session_logcontrast(const SelectionSession& session) {
  const auto model = session.model();
  if (!common_denominator(model.terms)) return std::nullopt;
  return to_logcontrast(session.fit(), model, session.data().composition.parts());
}

Json report_json(const SelectionSession& session, const ReportOptions& options) {
  const auto& data = session.data();
  const auto& parts = data.composition.parts();
  const auto& cfg = session.config();

  Json forced_terms = Json::array();
  for (const auto& t : cfg.forced_terms) forced_terms.push_back(term_label(t, parts));
  Json forced_covs = Json::array();
  for (std::size_t c : cfg.forced_covariates) forced_covs.push_back(data.covariate_names[c]);

  Json history = Json::array();
  for (const auto& h : session.history()) history.push_back(history_entry_json(h, parts));
  Json selected = Json::array();
  for (const auto& t : session.selected()) selected.push_back(term_label(t, parts));

  const auto lc = options.logcontrast ? options.logcontrast : session_logcontrast(session);
  const ScreeData sc = scree(session);
  const auto all = session.all_terms();

  Json doc{{"session",
            {{"method", static_cast<int>(cfg.method)},
             {"method_name", to_string(cfg.method)},
             {"family", to_string(cfg.family)},
             {"criterion", cfg.criterion.to_string()},
             {"alpha", cfg.criterion.alpha},
             {"penalty_per_parameter", session.penalty_per_parameter()},
             {"n", data.n()},
             {"J", data.J()},
             {"n_tests", session.n_tests()},
             {"seed", cfg.seed},
             {"forced_terms", forced_terms},
             {"forced_covariates", forced_covs},
             {"alr_denominator",
              session.alr_denominator() ? Json(parts[*session.alr_denominator()]) : Json(nullptr)},
             {"stopped", session.stopped()},
             {"steps", session.selected().size()},
             {"objective", number_or_null(session.objective())}}},
           {"history", history},
           {"selected", selected},
           {"fit", fit_to_json(session.fit())},
           {"logcontrast", lc ? logcontrast_to_json(*lc) : Json::array()},
           {"scree", scree_to_json(sc).at("steps")},
           {"scree_summary",
            {{"baseline", sc.baseline}, {"floor", optional_number(sc.floor)},
             {"max_explainable", optional_number(sc.max_explainable)}}},
           {"graph_dot", export_graph(all, parts)}};
  if (options.timestamp) doc["generated_at"] = utc_now();
  return doc;
}

void write_fit_csv(const FitSummary& fit, std::ostream& out) {
  out << "term,estimate,se,p_value\n";
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    out << csv::quote(fit.term_labels[static_cast<std::size_t>(j)]) << ',' << csv::format_number(fit.coefficients(j))
        << ',' << csv::format_number(fit.std_errors(j)) << ',' << csv::format_number(fit.p_values(j)) << '\n';
  }
}

void write_history_csv(const SelectionSession& session, std::ostream& out) {
  const auto& parts = session.data().composition.parts();
  out << "step,term,minus2loglik,objective,expert_choice,override_stop\n";
  for (const auto& h : session.history()) {
    out << h.step << ',' << (h.term ? csv::quote(term_label(*h.term, parts)) : std::string()) << ','
        << csv::format_number(h.minus2loglik) << ',' << csv::format_number(h.objective) << ','
        << (h.expert_choice ? "true" : "false") << ',' << (h.override_stop ? "true" : "false") << '\n';
  }
}

void write_scree_csv(const ScreeData& scree, std::ostream& out) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); };
  out << "step,term,deviance_drop,incremental_percent,cumulative_percent\n";
  for (const auto& s : scree.steps) {
    out << s.step << ',' << csv::quote(s.term) << ',' << csv::format_number(s.deviance_drop) << ','
        << opt(s.incremental_percent) << ',' << opt(s.cumulative_percent) << '\n';
  }
}

void write_logcontrast_csv(const LogContrastReport& report, std::ostream& out) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); };
  out << "part,coefficient,se,p_value,multiplicative_effect,percent_effect,ci_low,ci_high,effect_low,effect_high\n";
  for (const auto& e : report.entries) {
    out << csv::quote(e.name) << ',' << csv::format_number(e.coefficient) << ',' << opt(e.std_error) << ','
        << opt(e.p_value) << ',' << csv::format_number(e.multiplicative_effect()) << ','
        << csv::format_number(e.percent_effect()) << ',' << opt(e.ci_low) << ',' << opt(e.ci_high) << ','
        << opt(e.effect_low()) << ',' << opt(e.effect_high()) << '\n';
  }
}

void write_ranking_table(const CandidateRanking& ranking, std::span<const std::string> parts, std::ostream& out) {
  out << std::left << std::setw(6) << "rank" << std::setw(24) << "ratio" << std::right << std::setw(14) << "-2logLik"
      << std::setw(12) << "delta" << std::setw(14) << "objective" << "  stop\n";
  std::size_t rank = 1;
  for (const auto& e : ranking.entries) {
    out << std::left << std::setw(6) << rank++ << std::setw(24) << term_label(e.term, parts) << std::right
        << std::fixed << std::setprecision(4) << std::setw(14) << e.minus2loglik << std::setw(12) << e.delta_deviance
        << std::setw(14) << e.objective << "  " << (e.would_stop ? "yes" : "no") << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
  if (ranking.exhausted) out << "(no eligible logratios left)\n";
  for (const auto& d : ranking.diagnostics)
    out << "excluded " << term_label(d.term, parts) << ": " << d.reason << '\n';
}

}  // namespace lrstep
