#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lrstep {

using PartIndex = std::size_t;

/// One pairwise logratio log(x_num / x_den), parts addressed by index.
struct LogratioTerm {
  PartIndex num = 0;
  PartIndex den = 0;

  friend auto operator<=>(const LogratioTerm&, const LogratioTerm&) = default;

  LogratioTerm reversed() const { return {den, num}; }
  PartIndex low() const { return num < den ? num : den; }
  PartIndex high() const { return num < den ? den : num; }
  /// Orientation with the lower part index as numerator.
  LogratioTerm canonical() const { return {low(), high()}; }
  bool same_pair(const LogratioTerm& other) const {
    return low() == other.low() && high() == other.high();
  }
  bool involves(PartIndex p) const { return num == p || den == p; }
};

/// Coefficients over the J log-parts; they sum to zero.
struct LogContrast {
  Eigen::VectorXd coeffs;
};

/// n samples by J strictly positive parts.
///
/// Immutable once built. The log of every entry is cached because every
/// logratio is a difference of two cached columns.
class CompositionTable {
 public:
  CompositionTable(std::vector<std::string> parts, Eigen::MatrixXd samples,
                   std::vector<std::string> sample_ids);

  std::size_t n() const noexcept { return static_cast<std::size_t>(samples_.rows()); }
  std::size_t J() const noexcept { return parts_.size(); }

  const std::vector<std::string>& parts() const noexcept { return parts_; }
  const std::vector<std::string>& sample_ids() const noexcept { return sample_ids_; }
  const Eigen::MatrixXd& samples() const noexcept { return samples_; }
  const Eigen::MatrixXd& log_samples() const noexcept { return log_samples_; }

  std::optional<PartIndex> find_part(std::string_view name) const;
  /// Throws ValidationError for unknown names.
  PartIndex part_index(std::string_view name) const;

  /// Rows in the given order (duplicates allowed, used by resampling).
  CompositionTable select_rows(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> parts_;
  Eigen::MatrixXd samples_;
  Eigen::MatrixXd log_samples_;
  std::vector<std::string> sample_ids_;
  std::unordered_map<std::string, PartIndex> index_;
};

/// Rescales every row to sum to one.
CompositionTable close(const CompositionTable& table);

/// Multiplicative zero replacement: a zero in column j becomes
/// fraction * (smallest positive value of column j) and the positive
/// entries of that row shrink by a common factor so the row total is kept.
CompositionTable replace_zeros(const Eigen::MatrixXd& raw, std::vector<std::string> parts,
                               std::vector<std::string> sample_ids, double fraction = 0.65);

Eigen::VectorXd lr_values(const CompositionTable& table, LogratioTerm term);

/// Terms (j, den) for every j != den, in part order.
std::vector<LogratioTerm> alr_terms(std::size_t J, PartIndex den);

LogContrast term_to_logcontrast(LogratioTerm term, std::size_t J);

bool overlaps(LogratioTerm a, LogratioTerm b);

/// True when both parts of the candidate are already connected through the
/// selected terms, i.e. the candidate is a linear combination of them.
bool creates_cycle(std::span<const LogratioTerm> selected, LogratioTerm candidate);

/// Undirected view of a set of terms; edges point denominator -> numerator.
struct TermGraph {
  std::vector<PartIndex> vertices;  // order of first appearance
  std::vector<LogratioTerm> edges;

  static TermGraph from_terms(std::span<const LogratioTerm> terms);

  bool acyclic() const;
  bool connected() const;
};

/// "Num/Den" using part names.
std::string term_label(LogratioTerm term, std::span<const std::string> parts);

/// Inverse of term_label. Throws EligibilityError("invalid_term") for
/// unknown names or a part over itself.
LogratioTerm parse_term(std::string_view label, const CompositionTable& table);

}  // namespace lrstep
