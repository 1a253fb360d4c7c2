#include "lrstep/cli.hpp"

#include "csv.hpp"
#include "lrstep/error.hpp"
#include "lrstep/reporting.hpp"
#include "lrstep/serialize.hpp"
#include "lrstep/stepwise.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace lrstep {

namespace fs = std::filesystem;

namespace {

void add_data_options(CLI::App& cmd, CliConfig& c) {
  cmd.add_option("--data", c.data, "Composition CSV (first column sample id)");
  cmd.add_option("--response", c.response, "Response column name, or CSV file of id,response");
  cmd.add_option("--family", c.family, "gaussian | binomial | poisson")->capture_default_str();
  cmd.add_option("--force-cov", c.force_cov, "Covariate column forced into every model");
  cmd.add_option("--zero-policy", c.zero_policy, "multiplicative | strict")->capture_default_str();
  cmd.add_option("--zero-fraction", c.zero_fraction, "Fraction of the column minimum used for zeros")
      ->capture_default_str();
}

void add_session_options(CLI::App& cmd, CliConfig& c) {
  cmd.add_option("--method", c.method, "1 unrestricted, 2 non-overlapping, 3 ALR subcomposition")
      ->check(CLI::Range(1, 3))
      ->capture_default_str();
  cmd.add_option("--criterion", c.criterion, "aic | bic | bonferroni | steps=K")->capture_default_str();
  cmd.add_option("--alpha", c.alpha, "Significance level for bonferroni")->capture_default_str();
  cmd.add_option("--force-lr", c.force_lr, "Logratio Num/Den forced into every model");
  cmd.add_option("--seed", c.seed, "Seed for splitting and resampling")->capture_default_str();
  cmd.add_option_function<double>(
      "--split", [&c](const double& v) { c.split = v; }, "Train on this fraction, keep the rest as holdout");
}

struct Parser {
  CLI::App app{"Forward-stepwise selection of pairwise logratios in generalized linear models", "lrstep"};
  CliConfig config;

  Parser() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    auto* run = app.add_subcommand("run", "Batch selection run writing a report directory");
    add_data_options(*run, config);
    add_session_options(*run, config);
    run->add_option("--top-k", config.top_k, "Rows of the final candidate table")->capture_default_str();
    run->add_option("--out", config.out, "Output directory")->capture_default_str();
    run->add_option("--session", config.session, "Also write the session file here");

    auto* step = app.add_subcommand("step", "One interactive step on a persisted session");
    add_data_options(*step, config);
    add_session_options(*step, config);
    step->add_option("--session", config.session, "Session file (created on first use)")->required();
    step->add_option("--top-k", config.top_k, "Candidates to list")->capture_default_str();
    step->add_option_function<std::string>(
        "--choose", [this](const std::string& v) { config.choose = v; }, "Add this Num/Den instead of the best");
    step->add_flag("--undo", config.undo, "Remove the last added logratio");
    step->add_flag("--list-only", config.list_only, "Only print the candidate table");

    auto* validate = app.add_subcommand("validate", "Score a finished session on holdout data");
    validate->add_option("--session", config.session, "Session file")->required();
    validate->add_option("--holdout", config.holdout, "Holdout composition CSV with the same columns");
    validate->add_flag("--on-train", config.on_train, "Score the training data instead");
    validate->add_option("--out", config.out, "Directory for metrics.json")->capture_default_str();
  }

  // Throws CLI::ParseError.
  void parse(const std::vector<std::string>& args) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (auto* sub : app.get_subcommands()) config.subcommand = sub->get_name();
  }
};

LoadOptions load_options(const CliConfig& c) {
  if (c.data.empty()) throw ValidationError("--data is required");
  if (c.response.empty()) throw ValidationError("--response is required");
  LoadOptions o;
  o.composition_path = c.data;
  o.response = c.response;
  o.covariates = c.force_cov;
  o.family = parse_family(c.family);
  o.zero_policy = parse_zero_policy(c.zero_policy);
  o.zero_fraction = c.zero_fraction;
  return o;
}

std::shared_ptr<const DatasetBundle> load_training_data(const CliConfig& c) {
  DatasetBundle bundle = load_dataset(load_options(c));
  if (c.split) {
    auto [train, holdout] = split_holdout(bundle, SplitSpec{*c.split, c.seed});
    return std::make_shared<const DatasetBundle>(std::move(train));
  }
  return std::make_shared<const DatasetBundle>(std::move(bundle));
}

SelectionSession new_session(const CliConfig& c) {
  auto data = load_training_data(c);
  SessionConfig cfg;
  cfg.family = parse_family(c.family);
  cfg.method = parse_method(std::to_string(c.method));
  cfg.criterion = StoppingCriterion::parse(c.criterion, c.alpha);
  for (const auto& t : c.force_lr) cfg.forced_terms.push_back(parse_term(t, data->composition));
  for (std::size_t k = 0; k < c.force_cov.size(); ++k) cfg.forced_covariates.push_back(k);
  cfg.seed = c.seed;
  return SelectionSession::init(std::move(data), std::move(cfg));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("error writing '" + path.string() + "'");
}

template <class Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream os;
  fn(os);
  write_text(path, os.str());
}

Json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open session file '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("session file '" + path + "' is not valid JSON: " + e.what());
  }
}

void write_reports(const SelectionSession& session, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const auto& parts = session.data().composition.parts();
  write_with(dir / "fit.csv", [&](std::ostream& os) { write_fit_csv(session.fit(), os); });
  write_with(dir / "history.csv", [&](std::ostream& os) { write_history_csv(session, os); });
  write_with(dir / "scree.csv", [&](std::ostream& os) { write_scree_csv(scree(session), os); });
  write_text(dir / "graph.dot", export_graph(session.all_terms(), parts));
  if (auto lc = session_logcontrast(session))
    write_with(dir / "logcontrast.csv", [&](std::ostream& os) { write_logcontrast_csv(*lc, os); });
  write_text(dir / "report.json", report_json(session).dump(2) + "\n");
}

void print_fit(const SelectionSession& session, std::ostream& out) {
  const auto& fit = session.fit();
  out << std::left << std::setw(24) << "Ratio" << std::right << std::setw(12) << "Estimate" << std::setw(10) << "s.e."
      << std::setw(12) << "p-value" << '\n';
  for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
    const double p = fit.p_values(j);
    std::ostringstream pv;
    if (p < 1e-4)
      pv << "<0.0001";
    else
      pv << std::fixed << std::setprecision(4) << p;
    out << std::left << std::setw(24) << fit.term_labels[static_cast<std::size_t>(j)] << std::right << std::fixed
        << std::setprecision(4) << std::setw(12) << fit.coefficients(j) << std::setw(10) << fit.std_errors(j)
        << std::setw(12) << pv.str() << '\n';
  }
  out << std::fixed << std::setprecision(2) << "-2logLik " << fit.minus2loglik << "   objective "
      << session.objective() << " (penalty " << std::setprecision(4) << session.penalty_per_parameter()
      << " per parameter, m=" << fit.m << ")\n";
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

int cmd_run(const CliConfig& c, std::ostream& out) {
  SelectionSession session = new_session(c);
  session.run();
  const fs::path dir(c.out);
  write_reports(session, dir);
  const Json state = session_to_json(session);
  write_text(dir / "session.json", state.dump(2) + "\n");
  if (!c.session.empty()) write_text(c.session, state.dump(2) + "\n");
  out << "method " << c.method << " (" << to_string(session.method()) << "), criterion "
      << session.config().criterion.to_string() << ", " << session.selected().size() << " logratio(s) selected\n";
  print_fit(session, out);
  out << "reports written to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_step(const CliConfig& c, std::ostream& out) {
  std::optional<SelectionSession> session;
  if (fs::exists(c.session)) {
    session.emplace(session_from_json(read_json(c.session)));
  } else {
    session.emplace(new_session(c));
    out << "new session " << c.session << '\n';
  }
  const auto& parts = session->data().composition.parts();

  if (c.undo) {
    if (session->undo())
      out << "removed the last logratio\n";
    else
      out << "nothing to undo (step 0)\n";
  } else {
    std::optional<LogratioTerm> chosen;
    if (c.choose) {
      chosen = parse_term(*c.choose, session->data().composition);
      if (auto rule = session->ineligibility(*chosen))
        throw EligibilityError(*rule, "term '" + *c.choose + "' is not eligible (" + *rule + ")");
    }
    const CandidateRanking ranking = session->rank_candidates(c.top_k);
    write_ranking_table(ranking, parts, out);
    if (!c.list_only) {
      const StepOutcome outcome = session->step(chosen, /*override_stop=*/chosen.has_value());
      switch (outcome) {
        case StepOutcome::added:
          out << "added " << term_label(session->selected().back(), parts) << " at step "
              << session->selected().size() << '\n';
          break;
        case StepOutcome::stopped: out << "stopped: the best candidate does not improve the criterion\n"; break;
        case StepOutcome::exhausted: out << "stopped: no eligible logratio left\n"; break;
      }
    }
  }
  print_fit(*session, out);
  write_text(c.session, session_to_json(*session).dump(2) + "\n");
  return kExitOk;
}

int cmd_validate(const CliConfig& c, std::ostream& out) {
  const Json doc = read_json(c.session);
  const SelectionSession session = session_from_json(doc);
  const DatasetBundle& training = session.data();

  DatasetBundle holdout = [&]() -> DatasetBundle {
    if (c.on_train) return training;
    if (!c.holdout.empty()) {
      if (!fs::exists(c.holdout)) throw IoError("holdout file '" + c.holdout + "' does not exist");
      LoadOptions o = training.provenance.source;
      o.composition_path = c.holdout;
      return load_dataset(o);
    }
    if (training.provenance.split) {
      const DatasetBundle full = load_dataset(training.provenance.source);
      return split_holdout(full, *training.provenance.split).second;
    }
    throw ValidationError("no holdout data: pass --holdout, --on-train, or run the session with --split");
  }();

  const HoldoutMetrics metrics = evaluate_holdout(session.fit(), session.model(), training, holdout);
  const Json j = holdout_to_json(metrics);
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out + "': " + ec.message());
  write_text(fs::path(c.out) / "metrics.json", j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

std::vector<std::string> CliConfig::to_args() const {
  std::vector<std::string> a{subcommand};
  auto opt = [&](const char* flag, const std::string& v) {
    a.emplace_back(flag);
    a.push_back(v);
  };
  auto num = [](double v) { return csv::format_number(v); };
  if (subcommand != "validate") {
    if (!data.empty()) opt("--data", data);
    if (!response.empty()) opt("--response", response);
    opt("--family", family);
    for (const auto& f : force_cov) opt("--force-cov", f);
    opt("--zero-policy", zero_policy);
    opt("--zero-fraction", num(zero_fraction));
    opt("--method", std::to_string(method));
    opt("--criterion", criterion);
    opt("--alpha", num(alpha));
    for (const auto& f : force_lr) opt("--force-lr", f);
    opt("--seed", std::to_string(seed));
    if (split) opt("--split", num(*split));
    opt("--top-k", std::to_string(top_k));
  }
  if (subcommand == "step") {
    if (choose) opt("--choose", *choose);
    if (undo) a.emplace_back("--undo");
    if (list_only) a.emplace_back("--list-only");
  }
  if (subcommand == "validate") {
    if (!holdout.empty()) opt("--holdout", holdout);
    if (on_train) a.emplace_back("--on-train");
  }
  if (!session.empty()) opt("--session", session);
  if (subcommand != "step") opt("--out", out);
  return a;
}

CliConfig CliConfig::parse(const std::vector<std::string>& args) {
  Parser p;
  try {
    p.parse(args);
  } catch (const CLI::ParseError& e) {
    throw ValidationError(e.what());
  }
  return p.config;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Parser p;
  try {
    p.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = p.app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  const CliConfig& c = p.config;
  try {
    if (c.subcommand == "run") return cmd_run(c, out);
    if (c.subcommand == "step") return cmd_step(c, out);
    if (c.subcommand == "validate") return cmd_validate(c, out);
    err << "unknown subcommand\n";
    return kExitValidation;
  } catch (const EligibilityError& e) {
    err << "error [" << e.rule() << "]: " << e.what() << '\n';
    return kExitEligibility;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConvergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace lrstep
