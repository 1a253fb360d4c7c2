#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lrstep {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitEligibility = 3,
  kExitConvergence = 4,
  kExitIo = 5,
};

struct CliConfig {
  std::string subcommand;  // run | step | validate
  std::string data;
  std::string response;
  std::string family = "gaussian";
  int method = 1;
  std::string criterion = "bic";
  double alpha = 0.05;
  std::vector<std::string> force_lr;
  std::vector<std::string> force_cov;
  std::size_t top_k = 20;
  std::uint64_t seed = 1;
  std::optional<double> split;
  std::string out = ".";
  std::optional<std::string> choose;
  bool undo = false;
  std::string session;
  std::string holdout;
  bool on_train = false;
  bool list_only = false;
  std::string zero_policy = "multiplicative";
  double zero_fraction = 0.65;

  friend bool operator==(const CliConfig&, const CliConfig&) = default;

  /// Arguments (without program name) that parse back to this config.
  std::vector<std::string> to_args() const;
  /// Throws ValidationError on bad flags.
  static CliConfig parse(const std::vector<std::string>& args);
};

/// Entry point shared by the lrstep executable and the tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lrstep
