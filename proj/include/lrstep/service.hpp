#pragma once

#include "lrstep/serialize.hpp"
#include "lrstep/stepwise.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

namespace httplib {
class Server;
}

namespace lrstep {

struct ServiceOptions {
  std::string snapshot_dir;  // empty: no persistence
  std::size_t bootstrap_cap = 5000;
  unsigned threads = 0;
};

struct ServiceResponse {
  int status = 200;
  Json body;
  std::string text;  // used instead of body when content_type is not JSON
  std::string content_type = "application/json";

  std::string payload() const { return text.empty() ? body.dump(2) : text; }
};

/// Session store behind the REST endpoints. Transport independent so the
/// handlers can be tested without sockets. Mutations of one session are
/// serialized; different sessions proceed in parallel.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options = {});
  ~SessionService();

  ServiceResponse create(const Json& body);
  ServiceResponse get(const std::string& id);
  ServiceResponse candidates(const std::string& id, std::optional<std::size_t> top_k);
  /// Body {term?, force?, version?}. A version that is not the current one
  /// gets 409 with the current state.
  ServiceResponse step(const std::string& id, const Json& body);
  ServiceResponse undo(const std::string& id, const Json& body);
  ServiceResponse report(const std::string& id, const std::string& kind,
                         const std::map<std::string, std::string>& query = {});
  ServiceResponse healthz() const;

  /// Reads *.session.json from the snapshot directory. Returns the count.
  std::size_t restore_snapshots();
  std::size_t size() const;

 private:
  struct Record;
  std::shared_ptr<Record> find(const std::string& id) const;
  Json summary(const Record& record) const;
  void persist(const Record& record) const;

  ServiceOptions options_;
  mutable std::shared_mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Record>> records_;
};

/// Installs POST /sessions, GET /sessions/{id}, GET /sessions/{id}/candidates,
/// POST /sessions/{id}/step, POST /sessions/{id}/undo,
/// GET /sessions/{id}/report/{kind} and GET /healthz.
void register_routes(httplib::Server& server, SessionService& service);

}  // namespace lrstep
