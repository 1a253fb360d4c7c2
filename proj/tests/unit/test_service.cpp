#include "lrstep/service.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <random>
#include <sstream>
#include <thread>

using namespace lrstep;
using namespace lrstep::testing;

namespace {

std::string dataset_csv(std::uint64_t seed, std::size_t J = 6) {
  std::mt19937_64 rng(seed);
  auto b = synth(rng, 160, J, Family::binomial, {{{0, 1}, 1.3}, {{2, 1}, -1.0}});
  std::ostringstream os;
  write_dataset(b, os);
  return os.str();
}

Json create_body(const std::string& csv) {
  return Json{{"csv", csv}, {"response", "response"}, {"family", "binomial"}, {"method", 1}, {"criterion", "bic"}};
}

}  // namespace

TEST_CASE("create and inspect") {
  SessionService svc;
  auto r = svc.create(create_body(dataset_csv(1)));
  REQUIRE(r.status == 201);
  const std::string id = r.body["id"];
  CHECK(r.body["step"] == 0);
  CHECK(r.body["minus2loglik"].get<double>() > 0);
  CHECK(r.body["penalty_per_parameter"].get<double>() == doctest::Approx(std::log(160.0)));
  CHECK(svc.get(id).status == 200);
  CHECK(svc.get("nope").status == 404);
  CHECK(svc.healthz().body["sessions"] == 1);
}

TEST_CASE("create reports validation failures") {
  SessionService svc;
  auto body = create_body(dataset_csv(2));
  body["method"] = 2;
  body["forced_terms"] = {"P0/P1", "P1/P2"};
  auto r = svc.create(body);
  CHECK(r.status == 400);
  CHECK(r.body["rule"] == "overlap");
  CHECK(r.body["error"].get<std::string>().find("P0/P1") != std::string::npos);

  CHECK(svc.create(Json{{"csv", "id,A,B,y\ns1,1,2,3\n"}, {"response", "y"}, {"family", "binomial"}}).status == 400);
  CHECK(svc.create(Json{{"response", "y"}}).status == 400);
  CHECK(svc.create(Json::array()).status == 400);
  CHECK(svc.size() == 0);
}

TEST_CASE("bonferroni penalty for 48 parts") {
  std::mt19937_64 rng(3);
  auto b = synth(rng, 120, 48, Family::binomial, {});
  std::ostringstream os;
  write_dataset(b, os);
  SessionService svc;
  auto body = create_body(os.str());
  body["criterion"] = "bonferroni";
  body["alpha"] = 0.05;
  const auto r = svc.create(body);
  REQUIRE(r.status == 201);
  CHECK(std::abs(r.body["penalty_per_parameter"].get<double>() - 10.7130) < 5e-4);
}

TEST_CASE("candidates, steps and undo") {
  SessionService svc;
  const std::string id = svc.create(create_body(dataset_csv(4))).body["id"].get<std::string>();
  auto c = svc.candidates(id, std::nullopt);
  REQUIRE(c.status == 200);
  CHECK(c.body["entries"].size() <= 20);
  double prev = -1;
  for (const auto& e : c.body["entries"]) {
    CHECK(e["minus2loglik"].get<double>() >= prev);
    prev = e["minus2loglik"].get<double>();
  }
  CHECK(svc.candidates(id, 3).body["entries"].size() == 3);
  CHECK(svc.candidates("nope", 3).status == 404);

  const double m0 = svc.get(id).body["minus2loglik"];
  auto s = svc.step(id, Json::object());
  REQUIRE(s.status == 200);
  CHECK(s.body["outcome"] == "added");
  CHECK(s.body["step"] == 1);
  CHECK(s.body["version"] == 2);

  auto bad = svc.step(id, Json{{"term", "P0/P0"}});
  CHECK(bad.status == 422);
  CHECK(bad.body["rule"] == "invalid_term");

  auto u = svc.undo(id, Json::object());
  CHECK(u.status == 200);
  CHECK(u.body["minus2loglik"].get<double>() == m0);
  auto again = svc.undo(id, Json::object());
  CHECK(again.status == 200);
  CHECK(again.body.contains("notice"));

  svc.step(id, Json::object());
  svc.step(id, Json::object());
  svc.undo(id, Json::object());
  svc.undo(id, Json::object());
  CHECK(svc.get(id).body["minus2loglik"].get<double>() == m0);
}

TEST_CASE("forced expert step at a stopped state") {
  SessionService svc;
  const std::string id = svc.create(create_body(dataset_csv(5))).body["id"].get<std::string>();
  while (!svc.get(id).body["stopped"].get<bool>()) svc.step(id, Json::object());
  auto c = svc.candidates(id, 5);
  CHECK(c.status == 409);
  CHECK(c.body["report"] == "/sessions/" + id + "/report/fit");

  // Pick any still-eligible term through a fresh ranking of a copy.
  auto report = svc.report(id, "fit");
  REQUIRE(report.status == 200);
  const auto terms = svc.get(id).body["terms"];
  std::string pick;
  for (const char* t : {"P3/P4", "P4/P5", "P3/P5", "P5/P3"}) {
    auto r = svc.step(id, Json{{"term", t}, {"force", true}});
    if (r.status == 200) {
      pick = t;
      CHECK(r.body["outcome"] == "added");
      CHECK(r.body["history"].back()["forced"].is_boolean());
      CHECK(r.body["history"].back()["term"] == t);
      break;
    }
  }
  CHECK_FALSE(pick.empty());
}

TEST_CASE("version conflicts") {
  SessionService svc;
  const std::string id = svc.create(create_body(dataset_csv(6))).body["id"].get<std::string>();
  const auto version = svc.get(id).body["version"];
  std::vector<int> codes(2);
  std::vector<std::thread> ts;
  for (int k = 0; k < 2; ++k)
    ts.emplace_back([&, k] { codes[k] = svc.step(id, Json{{"version", version}}).status; });
  for (auto& t : ts) t.join();
  std::sort(codes.begin(), codes.end());
  CHECK(codes == std::vector<int>{200, 409});
  auto stale = svc.undo(id, Json{{"version", version}});
  CHECK(stale.status == 409);
  CHECK(stale.body["version"] == version.get<int>() + 1);
}

TEST_CASE("reports") {
  SessionService svc;
  auto body = create_body(dataset_csv(7));
  body["method"] = 3;
  body["criterion"] = "aic";
  const std::string id = svc.create(body).body["id"].get<std::string>();
  while (!svc.get(id).body["stopped"].get<bool>()) svc.step(id, Json::object());

  auto scree = svc.report(id, "scree");
  REQUIRE(scree.status == 200);
  double prev = 0;
  for (const auto& s : scree.body["steps"]) {
    CHECK(s["cumulative_percent"].get<double>() >= prev);
    prev = s["cumulative_percent"].get<double>();
  }
  auto graph = svc.report(id, "graph");
  CHECK(graph.content_type == "text/vnd.graphviz");
  CHECK(graph.text.find("connected=true") != std::string::npos);
  auto lc = svc.report(id, "logcontrast");
  REQUIRE(lc.status == 200);
  double sum = 0;
  for (const auto& e : lc.body) sum += e["coefficient"].get<double>();
  CHECK(std::abs(sum) < 1e-10);

  auto b1 = svc.report(id, "bootstrap", {{"B", "100"}, {"seed", "9"}});
  auto b2 = svc.report(id, "bootstrap", {{"B", "100"}, {"seed", "9"}});
  REQUIRE(b1.status == 200);
  CHECK(b1.body.dump() == b2.body.dump());
  CHECK(svc.report(id, "bootstrap", {{"B", "10"}}).status == 400);
  CHECK(svc.report(id, "unknown").status == 404);
  CHECK(svc.report("nope", "fit").status == 404);

  // Mixed denominators under method 2.
  auto b = create_body(dataset_csv(8));
  b["method"] = 2;
  b["forced_terms"] = {"P0/P1", "P2/P3"};
  const std::string id2 = svc.create(b).body["id"].get<std::string>();
  CHECK(svc.report(id2, "logcontrast").status == 409);
  CHECK(svc.report(id2, "bootstrap").status == 409);
}

TEST_CASE("bootstrap cap") {
  SessionService svc(ServiceOptions{"", 150, 0});
  auto body = create_body(dataset_csv(9));
  body["method"] = 3;
  body["forced_terms"] = {"P0/P1"};
  const std::string id = svc.create(body).body["id"].get<std::string>();
  auto r = svc.report(id, "bootstrap", {{"B", "100000"}});
  REQUIRE(r.status == 200);
}

TEST_CASE("snapshots restore sessions") {
  TempDir dir;
  std::string id;
  double m2ll = 0;
  {
    SessionService svc(ServiceOptions{dir.path().string(), 5000, 0});
    id = svc.create(create_body(dataset_csv(10))).body["id"].get<std::string>();
    svc.step(id, Json::object());
    svc.step(id, Json{{"term", "P4/P5"}, {"force", true}});
    m2ll = svc.get(id).body["minus2loglik"];
  }
  SessionService restored(ServiceOptions{dir.path().string(), 5000, 0});
  CHECK(restored.restore_snapshots() == 1);
  auto g = restored.get(id);
  REQUIRE(g.status == 200);
  CHECK(g.body["minus2loglik"].get<double>() == m2ll);
  CHECK(g.body["version"] == 3);
}

TEST_CASE("replaying the history through the API reproduces fits") {
  SessionService svc;
  const auto csv = dataset_csv(11);
  const std::string a = svc.create(create_body(csv)).body["id"].get<std::string>();
  while (!svc.get(a).body["stopped"].get<bool>()) svc.step(a, Json::object());
  const auto final_a = svc.get(a).body;
  const std::string b = svc.create(create_body(csv)).body["id"].get<std::string>();
  for (const auto& h : final_a["history"])
    if (!h["term"].is_null()) svc.step(b, Json{{"term", h["term"]}, {"force", true}});
  CHECK(svc.get(b).body["fit"].dump() == final_a["fit"].dump());
}

TEST_CASE("http routes") {
  SessionService svc;
  httplib::Server server;
  register_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto created = client.Post("/sessions", create_body(dataset_csv(12)).dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = Json::parse(created->body)["id"];

  auto cand = client.Get("/sessions/" + id + "/candidates?top_k=4");
  REQUIRE(cand);
  CHECK(Json::parse(cand->body)["entries"].size() == 4);
  auto step = client.Post("/sessions/" + id + "/step", "{}", "application/json");
  REQUIRE(step);
  CHECK(step->status == 200);
  auto bad = client.Post("/sessions/" + id + "/step", R"({"term":"A/A"})", "application/json");
  CHECK(bad->status == 422);
  auto garbage = client.Post("/sessions/" + id + "/step", "{not json", "application/json");
  CHECK(garbage->status == 400);
  auto undo = client.Post("/sessions/" + id + "/undo", "", "application/json");
  CHECK(undo->status == 200);
  auto graph = client.Get("/sessions/" + id + "/report/graph");
  CHECK(graph->status == 200);
  CHECK(graph->body.starts_with("digraph"));
  CHECK(client.Get("/sessions/zzz")->status == 404);

  server.stop();
  t.join();
}
