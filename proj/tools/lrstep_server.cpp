#include "lrstep/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdlib>
#include <iostream>

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HTTP session service for interactive logratio selection", "lrstep-server"};
  std::string host = env_or("LRSTEP_BIND", "127.0.0.1");
  int port = std::stoi(env_or("LRSTEP_PORT", "8080"));
  lrstep::ServiceOptions options;
  options.snapshot_dir = env_or("LRSTEP_SNAPSHOT_DIR", "");
  options.bootstrap_cap = std::stoul(env_or("LRSTEP_BOOTSTRAP_CAP", "5000"));
  app.add_option("--bind", host, "Bind address (LRSTEP_BIND)")->capture_default_str();
  app.add_option("--port", port, "Port (LRSTEP_PORT)")->capture_default_str();
  app.add_option("--snapshot-dir", options.snapshot_dir, "Session snapshot directory (LRSTEP_SNAPSHOT_DIR)");
  app.add_option("--bootstrap-cap", options.bootstrap_cap, "Largest bootstrap B (LRSTEP_BOOTSTRAP_CAP)")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  lrstep::SessionService service(options);
  try {
    if (const auto n = service.restore_snapshots()) std::cerr << "restored " << n << " session(s)\n";
  } catch (const std::exception& e) {
    std::cerr << "cannot restore snapshots: " << e.what() << '\n';
    return 5;
  }
  httplib::Server server;
  lrstep::register_routes(server, service);
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ':' << port << '\n';
    return 5;
  }
  return 0;
}
