#include "lrstep/composition.hpp"
#include "lrstep/dataset.hpp"
#include "lrstep/distributions.hpp"
#include "lrstep/error.hpp"
#include "lrstep/glm.hpp"
#include "lrstep/reporting.hpp"
#include "lrstep/serialize.hpp"
#include "lrstep/stepwise.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace lrstep;

namespace {

using Pair = std::pair<std::size_t, std::size_t>;

LogratioTerm to_term(const Pair& p) { return {p.first, p.second}; }

std::vector<LogratioTerm> to_terms(const std::vector<Pair>& v) {
  std::vector<LogratioTerm> out;
  for (const auto& p : v) out.push_back(to_term(p));
  return out;
}

std::vector<std::string> default_names(std::size_t J) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < J; ++j) names.push_back("p" + std::to_string(j));
  return names;
}

CompositionTable table_from(const Eigen::MatrixXd& samples) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) ids.push_back(std::to_string(i));
  return CompositionTable(default_names(static_cast<std::size_t>(samples.cols())), samples, ids);
}

// Python-side handle; the dataset is shared by the sessions built from it.
struct PyDataset {
  std::shared_ptr<const DatasetBundle> bundle;
};

PyDataset make_dataset(const Eigen::MatrixXd& samples, const Eigen::VectorXd& response, std::vector<std::string> parts,
                       const std::string& family, std::optional<Eigen::MatrixXd> covariates,
                       std::vector<std::string> covariate_names) {
  if (parts.empty()) parts = default_names(static_cast<std::size_t>(samples.cols()));
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) ids.push_back("s" + std::to_string(i + 1));
  DatasetBundle b{CompositionTable(std::move(parts), samples, std::move(ids)), response};
  b.family = parse_family(family);
  if (covariates) {
    b.covariates = *covariates;
    if (covariate_names.empty())
      for (Eigen::Index c = 0; c < covariates->cols(); ++c) covariate_names.push_back("cov" + std::to_string(c + 1));
    b.covariate_names = std::move(covariate_names);
  } else {
    b.covariates = Eigen::MatrixXd(samples.rows(), 0);
  }
  b.provenance.source.family = b.family;
  validate(b);
  return {std::make_shared<const DatasetBundle>(std::move(b))};
}

SelectionSession make_session(const PyDataset& data, int method, const std::string& criterion, double alpha,
                              const std::vector<std::string>& forced_terms,
                              const std::vector<std::string>& forced_covariates, std::uint64_t seed) {
  SessionConfig cfg;
  cfg.family = data.bundle->family;
  cfg.method = parse_method(std::to_string(method));
  cfg.criterion = StoppingCriterion::parse(criterion, alpha);
  for (const auto& t : forced_terms) cfg.forced_terms.push_back(parse_term(t, data.bundle->composition));
  for (const auto& c : forced_covariates) cfg.forced_covariates.push_back(data.bundle->covariate_index(c));
  cfg.seed = seed;
  return SelectionSession::init(data.bundle, std::move(cfg));
}

std::string step_outcome(StepOutcome o) {
  switch (o) {
    case StepOutcome::added: return "added";
    case StepOutcome::stopped: return "stopped";
    case StepOutcome::exhausted: return "exhausted";
  }
  return "";
}

}  // namespace

PYBIND11_MODULE(_lrstep, m) {
  m.doc() = "Forward-stepwise selection of pairwise logratios";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<EligibilityError>(m, "EligibilityError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("chi2_quantile_df1", &chi2_quantile_df1, py::arg("upper_tail"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def(
      "penalty_per_parameter",
      [](const std::string& criterion, std::size_t n, std::size_t n_tests, double alpha) {
        return penalty_per_parameter(StoppingCriterion::parse(criterion, alpha), n, n_tests);
      },
      py::arg("criterion"), py::arg("n"), py::arg("n_tests"), py::arg("alpha") = 0.05);

  py::class_<FitSummary>(m, "FitSummary")
      .def_readonly("coefficients", &FitSummary::coefficients)
      .def_readonly("std_errors", &FitSummary::std_errors)
      .def_readonly("p_values", &FitSummary::p_values)
      .def_readonly("covariance", &FitSummary::covariance)
      .def_readonly("minus2loglik", &FitSummary::minus2loglik)
      .def_readonly("dispersion", &FitSummary::dispersion)
      .def_readonly("n", &FitSummary::n)
      .def_readonly("m", &FitSummary::m)
      .def_readonly("converged", &FitSummary::converged)
      .def_readonly("iterations", &FitSummary::iterations)
      .def_readonly("term_labels", &FitSummary::term_labels)
      .def_readonly("warning", &FitSummary::warning)
      .def_property_readonly("family", [](const FitSummary& f) { return std::string(to_string(f.family)); });

  m.def(
      "fit_glm",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::string& family,
         const std::vector<std::string>& labels) { return fit_glm(X, y, parse_family(family), labels); },
      py::arg("X"), py::arg("y"), py::arg("family") = "gaussian", py::arg("labels") = std::vector<std::string>{});

  m.def(
      "close", [](const Eigen::MatrixXd& samples) { return close(table_from(samples)).samples(); },
      py::arg("samples"));
  m.def(
      "replace_zeros",
      [](const Eigen::MatrixXd& raw, double fraction) {
        std::vector<std::string> ids;
        for (Eigen::Index i = 0; i < raw.rows(); ++i) ids.push_back(std::to_string(i));
        return replace_zeros(raw, default_names(static_cast<std::size_t>(raw.cols())), ids, fraction).samples();
      },
      py::arg("raw"), py::arg("fraction") = 0.65);
  m.def(
      "lr_values",
      [](const Eigen::MatrixXd& samples, const Pair& term) { return lr_values(table_from(samples), to_term(term)); },
      py::arg("samples"), py::arg("term"));
  m.def(
      "alr_terms",
      [](std::size_t J, std::size_t den) {
        std::vector<Pair> out;
        for (const auto& t : alr_terms(J, den)) out.emplace_back(t.num, t.den);
        return out;
      },
      py::arg("J"), py::arg("den"));
  m.def(
      "term_to_logcontrast", [](const Pair& term, std::size_t J) { return term_to_logcontrast(to_term(term), J).coeffs; },
      py::arg("term"), py::arg("J"));
  m.def(
      "overlaps", [](const Pair& a, const Pair& b) { return overlaps(to_term(a), to_term(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "creates_cycle",
      [](const std::vector<Pair>& selected, const Pair& candidate) {
        return creates_cycle(to_terms(selected), to_term(candidate));
      },
      py::arg("selected"), py::arg("candidate"));

  py::class_<PyDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("samples"), py::arg("response"),
           py::arg("parts") = std::vector<std::string>{}, py::arg("family") = "gaussian",
           py::arg("covariates") = std::nullopt, py::arg("covariate_names") = std::vector<std::string>{})
      .def_static(
          "load",
          [](const std::string& path, const std::string& response, const std::string& family,
             const std::vector<std::string>& covariates, const std::string& zero_policy, double zero_fraction) {
            LoadOptions o;
            o.composition_path = path;
            o.response = response;
            o.family = parse_family(family);
            o.covariates = covariates;
            o.zero_policy = parse_zero_policy(zero_policy);
            o.zero_fraction = zero_fraction;
            return PyDataset{std::make_shared<const DatasetBundle>(load_dataset(o))};
          },
          py::arg("path"), py::arg("response"), py::arg("family") = "gaussian",
          py::arg("covariates") = std::vector<std::string>{}, py::arg("zero_policy") = "multiplicative",
          py::arg("zero_fraction") = 0.65)
      .def_property_readonly("n", [](const PyDataset& d) { return d.bundle->n(); })
      .def_property_readonly("J", [](const PyDataset& d) { return d.bundle->J(); })
      .def_property_readonly("parts", [](const PyDataset& d) { return d.bundle->composition.parts(); })
      .def_property_readonly("samples", [](const PyDataset& d) { return d.bundle->composition.samples(); })
      .def_property_readonly("response", [](const PyDataset& d) { return d.bundle->response; })
      .def("to_csv", [](const PyDataset& d) {
        std::ostringstream os;
        write_dataset(*d.bundle, os);
        return os.str();
      });

  py::class_<SelectionSession>(m, "Session")
      .def(py::init(&make_session), py::arg("data"), py::arg("method") = 1, py::arg("criterion") = "bic",
           py::arg("alpha") = 0.05, py::arg("forced_terms") = std::vector<std::string>{},
           py::arg("forced_covariates") = std::vector<std::string>{}, py::arg("seed") = 1)
      .def_property_readonly("selected",
                             [](const SelectionSession& s) {
                               std::vector<std::string> out;
                               for (const auto& t : s.selected())
                                 out.push_back(term_label(t, s.data().composition.parts()));
                               return out;
                             })
      .def_property_readonly("fit", &SelectionSession::fit)
      .def_property_readonly("stopped", &SelectionSession::stopped)
      .def_property_readonly("penalty_per_parameter", &SelectionSession::penalty_per_parameter)
      .def_property_readonly("objective", &SelectionSession::objective)
      .def("candidates_json",
           [](const SelectionSession& s, std::size_t top_k) {
             py::gil_scoped_release release;
             return ranking_to_json(s.rank_candidates(top_k), s.data().composition.parts()).dump();
           },
           py::arg("top_k") = 20)
      .def(
          "step",
          [](SelectionSession& s, std::optional<std::string> term, bool force) {
            std::optional<LogratioTerm> t;
            if (term) t = parse_term(*term, s.data().composition);
            py::gil_scoped_release release;
            return step_outcome(s.step(t, force));
          },
          py::arg("term") = std::nullopt, py::arg("force") = false)
      .def("run",
           [](SelectionSession& s) {
             py::gil_scoped_release release;
             s.run();
           })
      .def("undo", &SelectionSession::undo)
      .def("logcontrast_json",
           [](const SelectionSession& s) {
             return logcontrast_to_json(to_logcontrast(s.fit(), s.model(), s.data().composition.parts())).dump();
           })
      .def(
          "bootstrap_json",
          [](const SelectionSession& s, std::size_t B, std::uint64_t seed) {
            BootstrapOptions o;
            o.replicates = B;
            o.seed = seed;
            py::gil_scoped_release release;
            return logcontrast_to_json(bootstrap_logcontrast(s.data(), s.model(), o)).dump();
          },
          py::arg("B") = 1000, py::arg("seed") = 1)
      .def("scree_json", [](const SelectionSession& s) { return scree_to_json(scree(s)).dump(); })
      .def("graph", [](const SelectionSession& s) { return export_graph(s.all_terms(), s.data().composition.parts()); })
      .def("report_json", [](const SelectionSession& s) { return report_json(s, {.timestamp = false}).dump(); })
      .def("to_json", [](const SelectionSession& s) { return session_to_json(s).dump(); })
      .def_static(
          "from_json",
          [](const std::string& text, std::optional<PyDataset> data) {
            return session_from_json(Json::parse(text), data ? data->bundle : nullptr);
          },
          py::arg("text"), py::arg("data") = std::nullopt);
}
