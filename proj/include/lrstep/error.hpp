#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lrstep {

// Base of every error raised by the library. The subclasses map onto the
// CLI exit codes (2 validation, 3 eligibility, 4 convergence, 5 I/O).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class EligibilityError : public Error {
 public:
  EligibilityError(std::string rule, const std::string& what)
      : Error(what), rule_(std::move(rule)) {}

  // Short identifier of the violated rule, e.g. "cycle", "overlap",
  // "common_denominator", "invalid_term".
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Design matrix is not of full column rank.
class RankDeficientError : public ValidationError {
 public:
  RankDeficientError(std::vector<std::string> dependent, const std::string& what)
      : ValidationError(what), dependent_(std::move(dependent)) {}

  const std::vector<std::string>& dependent_columns() const noexcept { return dependent_; }

 private:
  std::vector<std::string> dependent_;
};

}  // namespace lrstep
