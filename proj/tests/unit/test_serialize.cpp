#include "lrstep/error.hpp"
#include "lrstep/serialize.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace lrstep;
using namespace lrstep::testing;

namespace {

struct Fixture {
  TempDir dir;
  LoadOptions load;
  std::shared_ptr<const DatasetBundle> data;

  explicit Fixture(Family f = Family::binomial) {
    std::mt19937_64 rng(31);
    const auto b = synth(rng, 150, 6, f, {{{0, 1}, 1.2}, {{2, 1}, -0.9}});
    load.composition_path = write_csv(b, dir.file("data.csv"));
    load.response = "response";
    load.family = f;
    data = share(load_dataset(load));
  }

  SelectionSession session(SelectionMethod m, StoppingCriterion c = StoppingCriterion::bic()) const {
    SessionConfig cfg;
    cfg.family = data->family;
    cfg.method = m;
    cfg.criterion = c;
    cfg.seed = 7;
    return SelectionSession::init(data, cfg);
  }
};

}  // namespace

TEST_CASE("session round trip through JSON") {
  Fixture fx;
  for (auto m : {SelectionMethod::unrestricted, SelectionMethod::nonoverlapping, SelectionMethod::alr_subcomposition}) {
    auto s = fx.session(m, StoppingCriterion::aic());
    s.run();
    const Json doc = session_to_json(s);
    CHECK(doc["format"] == "lrstep-session");
    const auto back = session_from_json(Json::parse(doc.dump()));
    CHECK(back.selected() == s.selected());
    CHECK(back.fit().minus2loglik == s.fit().minus2loglik);
    CHECK(back.alr_denominator() == s.alr_denominator());
    CHECK(back.stopped() == s.stopped());
    CHECK(back.config().seed == 7);
    CHECK(session_to_json(back) == doc);
  }
}

TEST_CASE("expert flags survive a round trip") {
  Fixture fx;
  auto s = fx.session(SelectionMethod::unrestricted);
  const auto r = s.rank_candidates(3);
  s.step(r.entries[2].term, true);
  const auto back = session_from_json(session_to_json(s), fx.data);
  CHECK(back.history().back().expert_choice);
  CHECK(back.history().back().override_stop == s.history().back().override_stop);
}

TEST_CASE("bad session documents") {
  Fixture fx;
  CHECK_THROWS_AS(session_from_json(Json{{"format", "other"}}), ValidationError);
  auto doc = session_to_json(fx.session(SelectionMethod::unrestricted));
  doc["format_version"] = kSessionFormatVersion + 1;
  CHECK_THROWS_AS(session_from_json(doc), ValidationError);

  auto s = fx.session(SelectionMethod::nonoverlapping);
  s.step();
  doc = session_to_json(s);
  doc["history"].push_back(doc["history"][1]);  // same term twice overlaps
  CHECK_THROWS_AS(session_from_json(doc), EligibilityError);

  doc = session_to_json(s);
  doc["dataset"]["composition_path"] = fx.dir.file("gone.csv");
  CHECK_THROWS_AS(session_from_json(doc), IoError);
}

TEST_CASE("split provenance is replayed") {
  Fixture fx;
  auto [train, hold] = split_holdout(*fx.data, SplitSpec{0.6, 3});
  auto data = share(std::move(train));
  SessionConfig cfg;
  cfg.family = Family::binomial;
  auto s = SelectionSession::init(data, cfg);
  s.run();
  const Json doc = session_to_json(s);
  CHECK(doc["dataset"]["split"]["partition"] == "train");
  const auto reloaded = load_session_dataset(doc);
  CHECK(reloaded.composition.sample_ids() == data->composition.sample_ids());
  CHECK(session_from_json(doc).fit().minus2loglik == s.fit().minus2loglik);
}

TEST_CASE("report schema") {
  Fixture fx;
  auto s = fx.session(SelectionMethod::alr_subcomposition, StoppingCriterion::aic());
  s.run();
  const Json r = report_json(s);
  for (const char* key : {"session", "history", "selected", "fit", "logcontrast", "scree", "graph_dot", "generated_at"})
    CHECK(r.contains(key));
  CHECK(r["selected"].size() == s.selected().size());
  CHECK(r["logcontrast"].size() == s.selected().size() + 1);
  CHECK(r["session"]["penalty_per_parameter"] == 2.0);

  // Deterministic apart from the timestamp.
  CHECK(report_json(s, {.timestamp = false}).dump() == report_json(s, {.timestamp = false}).dump());
  CHECK_FALSE(report_json(s, {.timestamp = false}).contains("generated_at"));
}

TEST_CASE("mixed denominators leave the log-contrast empty") {
  Fixture fx;
  auto s = fx.session(SelectionMethod::nonoverlapping, StoppingCriterion::fixed_steps(2));
  s.run();
  REQUIRE(s.selected().size() == 2);
  CHECK_FALSE(session_logcontrast(s));
  CHECK(report_json(s)["logcontrast"].empty());
}

TEST_CASE("csv tables") {
  Fixture fx;
  auto s = fx.session(SelectionMethod::unrestricted);
  s.run();
  std::ostringstream fit, hist, sc;
  write_fit_csv(s.fit(), fit);
  write_history_csv(s, hist);
  write_scree_csv(scree(s), sc);
  CHECK(fit.str().starts_with("term,estimate,se,p_value\n(Intercept),"));
  CHECK(hist.str().starts_with("step,term,minus2loglik,objective"));
  const std::string h = hist.str();
  CHECK(std::count(h.begin(), h.end(), '\n') == static_cast<long>(s.history().size() + 1));
  CHECK(sc.str().starts_with("step,term,deviance_drop"));

  std::ostringstream table;
  write_ranking_table(s.rank_candidates(5), fx.data->composition.parts(), table);
  CHECK(table.str().find("rank") == 0);
}

TEST_CASE("holdout metrics json") {
  const Json j = holdout_to_json(HoldoutMetrics{10, 5.5, 0.8, 0.9});
  CHECK(j["holdout_deviance"] == 5.5);
  CHECK(j["accuracy"] == 0.8);
  CHECK(j["auc"] == 0.9);
  CHECK(holdout_to_json(HoldoutMetrics{10, 5.5, {}, {}})["auc"].is_null());
}

TEST_CASE("load options round trip") {
  LoadOptions o;
  o.composition_path = "a.csv";
  o.response = "y";
  o.covariates = {"age"};
  o.family = Family::poisson;
  o.zero_policy = ZeroPolicy::strict;
  o.zero_fraction = 0.5;
  const auto back = load_options_from_json(load_options_to_json(o));
  CHECK(back.composition_path == "a.csv");
  CHECK(back.covariates == o.covariates);
  CHECK(back.family == Family::poisson);
  CHECK(back.zero_policy == ZeroPolicy::strict);
  CHECK(back.zero_fraction == 0.5);
}
