#include "lrstep/error.hpp"
#include "lrstep/reporting.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numeric>
#include <random>

using namespace lrstep;
using namespace lrstep::testing;

namespace {

// Fit whose numerator coefficients are given directly.
FitSummary fit_with(const std::vector<double>& b) {
  FitSummary f;
  f.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.size() + 1));
  for (std::size_t k = 0; k < b.size(); ++k) f.coefficients(static_cast<Eigen::Index>(k + 1)) = b[k];
  f.std_errors = Eigen::VectorXd::Constant(f.coefficients.size(), 0.1);
  f.p_values = Eigen::VectorXd::Constant(f.coefficients.size(), 0.5);
  return f;
}

SessionConfig config(SelectionMethod m, StoppingCriterion c = StoppingCriterion::bic()) {
  SessionConfig cfg;
  cfg.method = m;
  cfg.criterion = c;
  return cfg;
}

std::shared_ptr<const DatasetBundle> alr_data(std::uint64_t seed, std::size_t n = 200) {
  std::mt19937_64 rng(seed);
  return share(synth(rng, n, 6, Family::gaussian, {{{0, 5}, 0.8}, {{2, 5}, -0.6}, {{3, 5}, 0.4}}, 0.1, 0.4));
}

}  // namespace

TEST_CASE("denominator identity from the Bonferroni table") {
  const std::vector<double> b{0.1415, 0.1407, -0.2065, 0.1420, -0.2792, 0.2021, 0.1511, 0.1378, -0.0920};
  ModelTerms model;
  for (PartIndex j = 0; j < 9; ++j) model.terms.push_back({j, 9});
  const auto parts = part_names(10);
  const auto r = to_logcontrast(fit_with(b), model, parts);
  CHECK(std::abs(r.at(9).coefficient - (-0.3375)) < 5e-4);
  CHECK(std::abs(r.coefficient_sum()) < 1e-10);
  CHECK(r.denominator == 9);
  CHECK_FALSE(r.at(9).p_value);
  CHECK(r.at(0).source_term == std::optional<std::string>("P0/P9"));
  for (std::size_t k = 1; k < r.entries.size(); ++k) CHECK(r.entries[k - 1].coefficient >= r.entries[k].coefficient);
}

TEST_CASE("small log-contrasts") {
  const auto parts = part_names(3);
  const auto one = to_logcontrast(fit_with({0.7}), ModelTerms{{}, {{0, 2}}}, parts);
  CHECK(one.at(0).coefficient == 0.7);
  CHECK(one.at(2).coefficient == -0.7);
  const auto two = to_logcontrast(fit_with({0.3, 0.5}), ModelTerms{{}, {{0, 2}, {1, 2}}}, parts);
  CHECK(two.at(0).coefficient == 0.3);
  CHECK(two.at(1).coefficient == 0.5);
  CHECK(two.at(2).coefficient == doctest::Approx(-0.8));
  CHECK_THROWS_AS(to_logcontrast(fit_with({0.3, 0.5}), ModelTerms{{}, {{0, 2}, {2, 1}}}, parts), ValidationError);
  CHECK(one.at(0).multiplicative_effect() == doctest::Approx(std::exp(0.7)));
  CHECK(one.at(0).percent_effect() == doctest::Approx(100 * (std::exp(0.7) - 1)));
}

TEST_CASE("denominator rerun") {
  auto data = alr_data(1);
  auto s = SelectionSession::init(data, config(SelectionMethod::alr_subcomposition, StoppingCriterion::fixed_steps(3)));
  s.run();
  REQUIRE(s.selected().size() == 3);
  const PartIndex old_den = *s.alr_denominator();
  const auto model = s.model();
  const auto parts = data->composition.parts();
  const auto before = to_logcontrast(s.fit(), model, parts);

  const PartIndex new_den = model.terms[1].num;
  const auto rerun = rerun_with_denominator(s, new_den);
  CHECK(std::abs(rerun.fit.minus2loglik - s.fit().minus2loglik) < 1e-8);
  // The re-based term carries the old denominator's log-contrast entry.
  for (std::size_t k = 0; k < model.terms.size(); ++k) {
    const auto idx = static_cast<Eigen::Index>(k + 1);
    if (model.terms[k].num == new_den) {
      CHECK(rerun.model.terms[k] == LogratioTerm{old_den, new_den});
      CHECK(rerun.fit.coefficients(idx) == doctest::Approx(before.at(old_den).coefficient).epsilon(1e-8));
    } else {
      // Ratios over numerators other than the swapped parts keep their estimates and errors.
      CHECK(rerun.fit.coefficients(idx) == doctest::Approx(s.fit().coefficients(idx)).epsilon(1e-8));
      CHECK(rerun.fit.std_errors(idx) == doctest::Approx(s.fit().std_errors(idx)).epsilon(1e-8));
    }
  }
  // Same log-contrast whichever denominator is used.
  const auto after = to_logcontrast(rerun.fit, rerun.model, parts);
  for (const auto& e : before.entries) CHECK(std::abs(after.at(e.part).coefficient - e.coefficient) < 1e-8);

  PartIndex outside = 0;
  while (outside == old_den || std::any_of(model.terms.begin(), model.terms.end(),
                                           [&](const LogratioTerm& t) { return t.num == outside; }))
    ++outside;
  CHECK_THROWS_AS(rerun_with_denominator(s, outside), ValidationError);
}

TEST_CASE("chain spanning set gives the same fit as the ALR star") {
  auto data = alr_data(2);
  const ModelTerms star{{}, {{0, 5}, {2, 5}, {3, 5}}};
  const ModelTerms chain{{}, {{0, 5}, {2, 0}, {3, 2}}};
  const auto a = fit_glm(build_design(*data, star), data->response, Family::gaussian);
  const auto b = fit_glm(build_design(*data, chain), data->response, Family::gaussian);
  CHECK(std::abs(a.minus2loglik - b.minus2loglik) < 1e-8);
  const Eigen::VectorXd fa = build_design(*data, star) * a.coefficients;
  const Eigen::VectorXd fb = build_design(*data, chain) * b.coefficients;
  CHECK((fa - fb).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("bootstrap") {
  auto data = alr_data(3);
  const ModelTerms model{{}, {{0, 5}, {2, 5}, {3, 5}, {1, 5}}};
  BootstrapOptions o;
  o.replicates = 200;
  o.seed = 42;
  const auto r = bootstrap_logcontrast(*data, model, o);
  const auto point = to_logcontrast(fit_glm(build_design(*data, model), data->response, Family::gaussian), model,
                                    data->composition.parts());
  CHECK(r.replicates == 200);
  for (const auto& e : r.entries) {
    CHECK(e.coefficient == point.at(e.part).coefficient);
    REQUIRE(e.ci_low);
    CHECK(*e.ci_low <= *e.ci_high);
    CHECK(*e.effect_low() > 0);
  }
  // Part 1 has no effect in the generator; its interval straddles 1 on the
  // multiplicative scale.
  CHECK(*r.at(1).effect_low() < 1.0);
  CHECK(*r.at(1).effect_high() > 1.0);

  o.threads = 1;
  const auto again = bootstrap_logcontrast(*data, model, o);
  for (const auto& e : r.entries) {
    CHECK(again.at(e.part).ci_low == e.ci_low);
    CHECK(again.at(e.part).ci_high == e.ci_high);
  }

  o.levels = {0.5, 99.5};
  const auto wide = bootstrap_logcontrast(*data, model, o);
  for (const auto& e : r.entries) {
    CHECK(*wide.at(e.part).ci_low <= *e.ci_low);
    CHECK(*wide.at(e.part).ci_high >= *e.ci_high);
  }

  o.replicates = 50;
  CHECK_THROWS_AS(bootstrap_logcontrast(*data, model, o), ValidationError);
  o.replicates = 100;
  CHECK_THROWS_AS(bootstrap_logcontrast(*data, ModelTerms{{}, {{0, 5}, {5, 2}}}, o), ValidationError);
}

TEST_CASE("bootstrap aborts when too many fits fail") {
  // Parts 0 and 1 are proportional except in sample 0, so every resample
  // that misses it is rank deficient.
  std::mt19937_64 rng(5);
  auto b = synth(rng, 40, 3, Family::gaussian, {{{0, 2}, 0.5}});
  Eigen::MatrixXd x = b.composition.samples();
  for (Eigen::Index i = 1; i < x.rows(); ++i) x(i, 1) = 2.0 * x(i, 0);
  b = make_bundle(x, b.response, Family::gaussian);
  const ModelTerms model{{}, {{0, 2}, {1, 2}}};
  BootstrapOptions o;
  o.replicates = 100;
  CHECK_THROWS_AS(bootstrap_logcontrast(b, model, o), Error);
}

TEST_CASE("percentile type 7") {
  CHECK(percentile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(percentile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(percentile({5}, 0.9) == 5);
  CHECK(percentile({3, 1, 2}, 0.0) == 1);
  CHECK(percentile({3, 1, 2}, 1.0) == 3);
}

TEST_CASE("scree") {
  auto data = alr_data(4);
  auto s = SelectionSession::init(data, config(SelectionMethod::unrestricted, StoppingCriterion::fixed_steps(5)));
  s.run();
  const auto sc = scree(s);
  REQUIRE(sc.max_explainable);
  CHECK(sc.baseline == s.history().front().minus2loglik);
  double prev = 0.0;
  double sum = 0.0;
  for (const auto& st : sc.steps) {
    CHECK(*st.incremental_percent >= 0.0);
    CHECK(*st.cumulative_percent >= prev);
    CHECK(std::abs(*st.cumulative_percent - prev - *st.incremental_percent) < 1e-10);
    sum += *st.incremental_percent;
    prev = *st.cumulative_percent;
  }
  CHECK(std::abs(prev - sum) < 1e-10);
  // A full set of J-1 terms explains everything.
  CHECK(std::abs(prev - 100.0) < 1e-6);

  // Floor does not depend on the spanning set.
  const ModelTerms chain{{}, {{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 4}}};
  const auto chain_fit = fit_glm(build_design(*data, chain), data->response, Family::gaussian);
  CHECK(std::abs(chain_fit.minus2loglik - *sc.floor) < 1e-8);

  // Too few samples for the full model.
  std::mt19937_64 rng(6);
  auto small = share(synth(rng, 5, 6, Family::gaussian, {}));
  auto t = SelectionSession::init(small, config(SelectionMethod::unrestricted, StoppingCriterion::fixed_steps(1)));
  t.run();
  const auto st = scree(t);
  CHECK_FALSE(st.max_explainable);
  REQUIRE(st.steps.size() == 1);
  CHECK_FALSE(st.steps[0].incremental_percent);
  CHECK(st.steps[0].deviance_drop >= 0);
}

TEST_CASE("graph export") {
  const std::vector<std::string> parts{"Stre", "Rose", "Egge"};
  const std::vector<LogratioTerm> one{{0, 1}};
  const std::string g = export_graph(one, parts);
  CHECK(g.find("\"Rose\" -> \"Stre\"") != std::string::npos);
  CHECK(g.find("connected=true") != std::string::npos);
  CHECK(export_graph({}, parts) == "digraph logratios {\n}\n");

  const std::vector<LogratioTerm> star{{0, 1}, {2, 1}};
  CHECK(export_graph(star, parts).find("connected=true") != std::string::npos);
  const std::vector<std::string> four{"A", "B", "C", "D"};
  const std::vector<LogratioTerm> split{{0, 1}, {2, 3}};
  const std::string s = export_graph(split, four);
  CHECK(s.find("connected=false") != std::string::npos);
  CHECK(s.find("[label=\"2\"]") != std::string::npos);
}

TEST_CASE("method 3 graph is a connected star") {
  auto data = alr_data(7);
  auto s = SelectionSession::init(data, config(SelectionMethod::alr_subcomposition, StoppingCriterion::aic()));
  s.run();
  REQUIRE(s.selected().size() >= 2);
  const auto terms = s.all_terms();
  CHECK(TermGraph::from_terms(terms).connected());
  CHECK(export_graph(terms, data->composition.parts()).find("connected=true") != std::string::npos);
}
