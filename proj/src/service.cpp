#include "lrstep/service.hpp"

#include "lrstep/error.hpp"
#include "lrstep/reporting.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace lrstep {

namespace fs = std::filesystem;

struct SessionService::Record {
  std::string id;
  std::optional<SelectionSession> session;
  std::uint64_t version = 0;
  std::string created;
  std::string updated;
  std::string dataset;  // path or "upload"
  std::mutex mutex;
};

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string new_id() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(m);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << rng();
  return os.str();
}

ServiceResponse json_response(int status, Json body) {
  ServiceResponse r;
  r.status = status;
  r.body = std::move(body);
  return r;
}

ServiceResponse error_response(int status, const std::string& message, const std::string& rule = {}) {
  Json body{{"error", message}};
  if (!rule.empty()) body["rule"] = rule;
  return json_response(status, std::move(body));
}

ServiceResponse not_found(const std::string& id) { return error_response(404, "no session '" + id + "'"); }

// Maps library errors raised while mutating a session.
template <class Fn>
ServiceResponse guarded(int validation_status, Fn&& fn) {
  try {
    return fn();
  } catch (const EligibilityError& e) {
    return error_response(validation_status, e.what(), e.rule());
  } catch (const IoError& e) {
    return error_response(400, e.what());
  } catch (const Error& e) {
    return error_response(validation_status, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, std::string("bad request body: ") + e.what());
  }
}

template <class T>
T body_value(const Json& body, const char* key, T fallback) {
  if (!body.contains(key) || body.at(key).is_null()) return fallback;
  return body.at(key).get<T>();
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write '" + tmp.string() + "'");
    f << text;
    if (!f) throw IoError("error writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.snapshot_dir.empty()) fs::create_directories(options_.snapshot_dir);
}

SessionService::~SessionService() = default;

std::size_t SessionService::size() const {
  std::shared_lock lock(store_mutex_);
  return records_.size();
}

std::shared_ptr<SessionService::Record> SessionService::find(const std::string& id) const {
  std::shared_lock lock(store_mutex_);
  auto it = records_.find(id);
  return it == records_.end() ? nullptr : it->second;
}

Json SessionService::summary(const Record& r) const {
  const SelectionSession& s = *r.session;
  const auto& parts = s.data().composition.parts();
  Json selected = Json::array();
  for (const auto& t : s.all_terms()) selected.push_back(term_label(t, parts));
  Json history = Json::array();
  for (const auto& h : s.history()) {
    history.push_back(Json{{"step", h.step},
                           {"term", h.term ? Json(term_label(*h.term, parts)) : Json(nullptr)},
                           {"minus2loglik", h.minus2loglik},
                           {"objective", h.objective},
                           {"expert_choice", h.expert_choice},
                           {"forced", h.override_stop}});
  }
  return Json{{"id", r.id},
              {"version", r.version},
              {"created", r.created},
              {"updated", r.updated},
              {"dataset", r.dataset},
              {"n", s.data().n()},
              {"J", s.data().J()},
              {"family", to_string(s.config().family)},
              {"method", static_cast<int>(s.method())},
              {"criterion", s.config().criterion.to_string()},
              {"penalty_per_parameter", s.penalty_per_parameter()},
              {"step", s.selected().size()},
              {"stopped", s.stopped()},
              {"alr_denominator", s.alr_denominator() ? Json(parts[*s.alr_denominator()]) : Json(nullptr)},
              {"terms", selected},
              {"minus2loglik", s.fit().minus2loglik},
              {"objective", s.objective()},
              {"fit", fit_to_json(s.fit())},
              {"history", history}};
}

void SessionService::persist(const Record& r) const {
  if (options_.snapshot_dir.empty()) return;
  const Json doc{{"id", r.id},
                 {"version", r.version},
                 {"created", r.created},
                 {"updated", r.updated},
                 {"dataset", r.dataset},
                 {"session", session_to_json(*r.session)}};
  write_file_atomic(fs::path(options_.snapshot_dir) / (r.id + ".session.json"), doc.dump(2) + "\n");
}

std::size_t SessionService::restore_snapshots() {
  if (options_.snapshot_dir.empty() || !fs::is_directory(options_.snapshot_dir)) return 0;
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(options_.snapshot_dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.ends_with(".session.json")) continue;
    std::ifstream f(entry.path());
    const Json doc = Json::parse(f);
    auto r = std::make_shared<Record>();
    r->id = doc.at("id").get<std::string>();
    r->version = doc.at("version").get<std::uint64_t>();
    r->created = doc.value("created", std::string());
    r->updated = doc.value("updated", std::string());
    r->dataset = doc.value("dataset", std::string());
    r->session.emplace(session_from_json(doc.at("session")));
    std::unique_lock lock(store_mutex_);
    records_[r->id] = std::move(r);
    ++count;
  }
  return count;
}

ServiceResponse SessionService::create(const Json& body) {
  return guarded(400, [&]() -> ServiceResponse {
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    const std::string id = new_id();

    LoadOptions load;
    load.response = body_value<std::string>(body, "response", "");
    if (load.response.empty()) throw ValidationError("'response' is required");
    load.covariates = body_value<std::vector<std::string>>(body, "covariates", {});
    load.family = parse_family(body_value<std::string>(body, "family", "gaussian"));
    load.zero_policy = parse_zero_policy(body_value<std::string>(body, "zero_policy", "multiplicative"));
    load.zero_fraction = body_value<double>(body, "zero_fraction", 0.65);

    std::optional<DatasetBundle> bundle;
    std::string dataset_ref;
    if (body.contains("csv")) {
      const std::string text = body.at("csv").get<std::string>();
      const std::string response_text = body_value<std::string>(body, "response_csv", "");
      std::istringstream comp(text);
      std::istringstream resp(response_text);
      bundle.emplace(parse_dataset(comp, response_text.empty() ? nullptr : &resp, load));
      // Keep uploads next to the snapshots so restored sessions can reload them.
      if (!options_.snapshot_dir.empty()) {
        const fs::path dir(options_.snapshot_dir);
        load.composition_path = (dir / (id + ".data.csv")).string();
        write_file_atomic(load.composition_path, text);
        if (!response_text.empty()) {
          load.response = (dir / (id + ".response.csv")).string();
          write_file_atomic(load.response, response_text);
        }
      } else {
        load.composition_path = "upload:" + id;
      }
      bundle->provenance.source = load;
      dataset_ref = "upload";
    } else if (body.contains("path")) {
      load.composition_path = body.at("path").get<std::string>();
      bundle.emplace(load_dataset(load));
      dataset_ref = load.composition_path;
    } else {
      throw ValidationError("give the dataset as 'csv' text or a 'path'");
    }
    auto data = std::make_shared<const DatasetBundle>(std::move(*bundle));

    SessionConfig cfg;
    cfg.family = load.family;
    const Json method = body.value("method", Json(1));
    cfg.method = parse_method(method.is_string() ? method.get<std::string>() : std::to_string(method.get<int>()));
    cfg.criterion = StoppingCriterion::parse(body_value<std::string>(body, "criterion", "bic"),
                                             body_value<double>(body, "alpha", 0.05));
    for (const auto& label : body_value<std::vector<std::string>>(body, "forced_terms", {}))
      cfg.forced_terms.push_back(parse_term(label, data->composition));
    for (const auto& name : body_value<std::vector<std::string>>(body, "forced_covariates", {}))
      cfg.forced_covariates.push_back(data->covariate_index(name));
    cfg.seed = body_value<std::uint64_t>(body, "seed", 1);
    cfg.threads = options_.threads;

    auto r = std::make_shared<Record>();
    r->id = id;
    r->session.emplace(SelectionSession::init(data, std::move(cfg)));
    r->version = 1;
    r->created = r->updated = utc_now();
    r->dataset = dataset_ref;
    persist(*r);
    Json out = summary(*r);
    {
      std::unique_lock lock(store_mutex_);
      records_[id] = std::move(r);
    }
    return json_response(201, std::move(out));
  });
}

ServiceResponse SessionService::get(const std::string& id) {
  auto r = find(id);
  if (!r) return not_found(id);
  std::lock_guard lock(r->mutex);
  return json_response(200, summary(*r));
}

ServiceResponse SessionService::candidates(const std::string& id, std::optional<std::size_t> top_k) {
  auto r = find(id);
  if (!r) return not_found(id);
  std::lock_guard lock(r->mutex);
  const SelectionSession& s = *r->session;
  if (s.stopped()) {
    return json_response(409, Json{{"error", "session has stopped"},
                                   {"version", r->version},
                                   {"report", "/sessions/" + id + "/report/fit"}});
  }
  return guarded(422, [&] {
    const CandidateRanking ranking = s.rank_candidates(top_k.value_or(20));
    Json out = ranking_to_json(ranking, s.data().composition.parts());
    out["version"] = r->version;
    return json_response(200, std::move(out));
  });
}

ServiceResponse SessionService::step(const std::string& id, const Json& body) {
  auto r = find(id);
  if (!r) return not_found(id);
  std::lock_guard lock(r->mutex);
  return guarded(422, [&] {
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    if (body.contains("version") && body.at("version").get<std::uint64_t>() != r->version) {
      Json out = summary(*r);
      out["error"] = "version conflict";
      return json_response(409, std::move(out));
    }
    SelectionSession& s = *r->session;
    std::optional<LogratioTerm> term;
    if (body.contains("term") && !body.at("term").is_null())
      term = parse_term(body.at("term").get<std::string>(), s.data().composition);
    const bool force = body_value<bool>(body, "force", false);

    SelectionSession next = s;
    const StepOutcome outcome = next.step(term, force);
    if (outcome == StepOutcome::added || next.stopped() != s.stopped()) {
      s = std::move(next);
      ++r->version;
      r->updated = utc_now();
      persist(*r);
    }
    Json out = summary(*r);
    out["outcome"] = outcome == StepOutcome::added ? "added" : outcome == StepOutcome::stopped ? "stopped" : "exhausted";
    return json_response(200, std::move(out));
  });
}

ServiceResponse SessionService::undo(const std::string& id, const Json& body) {
  auto r = find(id);
  if (!r) return not_found(id);
  std::lock_guard lock(r->mutex);
  return guarded(422, [&] {
    if (body.is_object() && body.contains("version") && body.at("version").get<std::uint64_t>() != r->version) {
      Json out = summary(*r);
      out["error"] = "version conflict";
      return json_response(409, std::move(out));
    }
    const bool changed = r->session->undo();
    if (changed) {
      ++r->version;
      r->updated = utc_now();
      persist(*r);
    }
    Json out = summary(*r);
    if (!changed) out["notice"] = "nothing to undo at step 0";
    return json_response(200, std::move(out));
  });
}

ServiceResponse SessionService::report(const std::string& id, const std::string& kind,
                                       const std::map<std::string, std::string>& query) {
  auto r = find(id);
  if (!r) return not_found(id);
  std::lock_guard lock(r->mutex);
  const SelectionSession& s = *r->session;
  const auto& parts = s.data().composition.parts();
  return guarded(422, [&]() -> ServiceResponse {
    if (kind == "fit") return json_response(200, fit_to_json(s.fit()));
    if (kind == "scree") return json_response(200, scree_to_json(scree(s)));
    if (kind == "graph") {
      ServiceResponse out;
      out.text = export_graph(s.all_terms(), parts);
      out.content_type = "text/vnd.graphviz";
      return out;
    }
    if (kind == "full") return json_response(200, report_json(s));
    if (kind != "logcontrast" && kind != "bootstrap") return error_response(404, "unknown report kind '" + kind + "'");

    const ModelTerms model = s.model();
    if (!common_denominator(model.terms))
      return error_response(409, "the selected logratios do not share a denominator");
    if (kind == "logcontrast") return json_response(200, logcontrast_to_json(to_logcontrast(s.fit(), model, parts)));

    BootstrapOptions bo;
    bo.replicates = 1000;
    bo.seed = s.config().seed;
    bo.threads = options_.threads;
    try {
      if (auto it = query.find("B"); it != query.end()) bo.replicates = std::stoul(it->second);
      if (auto it = query.find("seed"); it != query.end()) bo.seed = std::stoull(it->second);
    } catch (const std::exception&) {
      return error_response(400, "B and seed must be non-negative integers");
    }
    bo.replicates = std::min(bo.replicates, options_.bootstrap_cap);
    if (bo.replicates < 100) return error_response(400, "B must be at least 100");
    return json_response(200, logcontrast_to_json(bootstrap_logcontrast(s.data(), model, bo)));
  });
}

ServiceResponse SessionService::healthz() const {
  return json_response(200, Json{{"status", "ok"}, {"sessions", size()}});
}

void register_routes(httplib::Server& server, SessionService& service) {
  auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.payload(), r.content_type);
  };
  auto parse_body = [](const httplib::Request& req) -> std::optional<Json> {
    if (req.body.empty()) return Json::object();
    try {
      return Json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  };
  auto bad_json = [send](httplib::Response& res) { send(res, error_response(400, "request body is not valid JSON")); };

  server.Get("/healthz", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.healthz());
  });
  server.Post("/sessions", [&service, send, parse_body, bad_json](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    if (!body) return bad_json(res);
    send(res, service.create(*body));
  });
  server.Get(R"(/sessions/([^/]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+)/candidates)", [&service, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::size_t> top_k;
    if (req.has_param("top_k")) {
      try {
        top_k = std::stoul(req.get_param_value("top_k"));
      } catch (const std::exception&) {
        return send(res, error_response(400, "top_k must be a non-negative integer"));
      }
    }
    send(res, service.candidates(req.matches[1], top_k));
  });
  server.Post(R"(/sessions/([^/]+)/step)",
              [&service, send, parse_body, bad_json](const httplib::Request& req, httplib::Response& res) {
                auto body = parse_body(req);
                if (!body) return bad_json(res);
                send(res, service.step(req.matches[1], *body));
              });
  server.Post(R"(/sessions/([^/]+)/undo)",
              [&service, send, parse_body, bad_json](const httplib::Request& req, httplib::Response& res) {
                auto body = parse_body(req);
                if (!body) return bad_json(res);
                send(res, service.undo(req.matches[1], *body));
              });
  server.Get(R"(/sessions/([^/]+)/report/([^/]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    send(res, service.report(req.matches[1], req.matches[2], query));
  });
}

}  // namespace lrstep
