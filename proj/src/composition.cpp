#include "lrstep/composition.hpp"

#include "lrstep/error.hpp"
#include "lrstep/union_find.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lrstep {

namespace {

std::string sample_name(const std::vector<std::string>& ids, Eigen::Index row) {
  std::ostringstream os;
  os << "row " << (row + 1);
  if (static_cast<std::size_t>(row) < ids.size()) os << " (sample '" << ids[row] << "')";
  return os.str();
}

}  // namespace

CompositionTable::CompositionTable(std::vector<std::string> parts, Eigen::MatrixXd samples,
                                   std::vector<std::string> sample_ids)
    : parts_(std::move(parts)), samples_(std::move(samples)), sample_ids_(std::move(sample_ids)) {
  if (parts_.size() < 2) throw ValidationError("composition needs at least 2 parts");
  if (samples_.rows() < 1) throw ValidationError("composition needs at least 1 sample");
  if (static_cast<std::size_t>(samples_.cols()) != parts_.size())
    throw ValidationError("composition column count does not match part names");
  if (sample_ids_.empty()) {
    for (Eigen::Index i = 0; i < samples_.rows(); ++i) sample_ids_.push_back(std::to_string(i + 1));
  }
  if (static_cast<Eigen::Index>(sample_ids_.size()) != samples_.rows())
    throw ValidationError("sample id count does not match composition rows");

  for (PartIndex j = 0; j < parts_.size(); ++j) {
    if (parts_[j].empty()) throw ValidationError("part " + std::to_string(j + 1) + " has an empty name");
    if (!index_.emplace(parts_[j], j).second)
      throw ValidationError("duplicate part name '" + parts_[j] + "'");
  }
  for (Eigen::Index i = 0; i < samples_.rows(); ++i) {
    for (Eigen::Index j = 0; j < samples_.cols(); ++j) {
      const double v = samples_(i, j);
      if (!(v > 0.0) || !std::isfinite(v)) {
        std::ostringstream os;
        os << sample_name(sample_ids_, i) << ", part '" << parts_[j] << "': value " << v
           << " is not strictly positive";
        throw ValidationError(os.str());
      }
    }
  }
  log_samples_ = samples_.array().log().matrix();
}

std::optional<PartIndex> CompositionTable::find_part(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

PartIndex CompositionTable::part_index(std::string_view name) const {
  if (auto idx = find_part(name)) return *idx;
  throw ValidationError("unknown part '" + std::string(name) + "'");
}

CompositionTable CompositionTable::select_rows(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), samples_.cols());
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = samples_.row(static_cast<Eigen::Index>(rows[r]));
    ids.push_back(sample_ids_[rows[r]]);
  }
  return CompositionTable(parts_, std::move(out), std::move(ids));
}

CompositionTable close(const CompositionTable& table) {
  Eigen::VectorXd totals = table.samples().rowwise().sum();
  Eigen::MatrixXd closed = totals.cwiseInverse().asDiagonal() * table.samples();
  return CompositionTable(table.parts(), std::move(closed), table.sample_ids());
}

CompositionTable replace_zeros(const Eigen::MatrixXd& raw, std::vector<std::string> parts,
                               std::vector<std::string> sample_ids, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("zero replacement fraction must lie in (0, 1)");
  if (static_cast<std::size_t>(raw.cols()) != parts.size())
    throw ValidationError("composition column count does not match part names");

  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double v = raw(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        std::ostringstream os;
        os << sample_name(sample_ids, i) << ", part '" << parts[j] << "': value " << v
           << " is negative or not finite";
        throw ValidationError(os.str());
      }
    }
  }

  Eigen::VectorXd column_min(raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double v = raw(i, j);
      if (v > 0.0 && (m == 0.0 || v < m)) m = v;
    }
    if (m == 0.0) throw ValidationError("part '" + parts[j] + "' is zero in every sample");
    column_min(j) = m;
  }

  Eigen::MatrixXd out = raw;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double total = raw.row(i).sum();
    if (total <= 0.0) throw ValidationError(sample_name(sample_ids, i) + " is zero in every part");
    double imputed = 0.0;
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
      if (raw(i, j) == 0.0) imputed += fraction * column_min(j);
    if (imputed == 0.0) continue;
    const double shrink = (total - imputed) / total;
    if (!(shrink > 0.0))
      throw ValidationError(sample_name(sample_ids, i) +
                            ": imputed zeros exceed the row total; lower the replacement fraction");
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
      out(i, j) = raw(i, j) == 0.0 ? fraction * column_min(j) : raw(i, j) * shrink;
  }
  return CompositionTable(std::move(parts), std::move(out), std::move(sample_ids));
}

Eigen::VectorXd lr_values(const CompositionTable& table, LogratioTerm term) {
  if (term.num == term.den || term.num >= table.J() || term.den >= table.J())
    throw ValidationError("invalid logratio term");
  const auto& logs = table.log_samples();
  return logs.col(static_cast<Eigen::Index>(term.num)) - logs.col(static_cast<Eigen::Index>(term.den));
}

std::vector<LogratioTerm> alr_terms(std::size_t J, PartIndex den) {
  if (den >= J) throw ValidationError("ALR denominator index out of range");
  std::vector<LogratioTerm> out;
  out.reserve(J - 1);
  for (PartIndex j = 0; j < J; ++j)
    if (j != den) out.push_back({j, den});
  return out;
}

LogContrast term_to_logcontrast(LogratioTerm term, std::size_t J) {
  LogContrast lc{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J))};
  lc.coeffs(static_cast<Eigen::Index>(term.num)) = 1.0;
  lc.coeffs(static_cast<Eigen::Index>(term.den)) = -1.0;
  return lc;
}

bool overlaps(LogratioTerm a, LogratioTerm b) {
  return a.involves(b.num) || a.involves(b.den);
}

bool creates_cycle(std::span<const LogratioTerm> selected, LogratioTerm candidate) {
  PartIndex max_index = std::max(candidate.num, candidate.den);
  for (const auto& t : selected) max_index = std::max({max_index, t.num, t.den});
  UnionFind uf(max_index + 1);
  for (const auto& t : selected) uf.unite(t.num, t.den);
  return uf.connected(candidate.num, candidate.den);
}

TermGraph TermGraph::from_terms(std::span<const LogratioTerm> terms) {
  TermGraph g;
  g.edges.assign(terms.begin(), terms.end());
  for (const auto& t : terms) {
    for (PartIndex p : {t.den, t.num})
      if (std::find(g.vertices.begin(), g.vertices.end(), p) == g.vertices.end()) g.vertices.push_back(p);
  }
  return g;
}

bool TermGraph::acyclic() const {
  PartIndex max_index = 0;
  for (PartIndex v : vertices) max_index = std::max(max_index, v);
  UnionFind uf(max_index + 1);
  for (const auto& e : edges)
    if (!uf.unite(e.num, e.den)) return false;
  return true;
}

bool TermGraph::connected() const {
  if (vertices.empty()) return false;
  PartIndex max_index = 0;
  for (PartIndex v : vertices) max_index = std::max(max_index, v);
  UnionFind uf(max_index + 1);
  for (const auto& e : edges) uf.unite(e.num, e.den);
  const auto root = uf.find(vertices.front());
  return std::all_of(vertices.begin(), vertices.end(), [&](PartIndex v) { return uf.find(v) == root; });
}

std::string term_label(LogratioTerm term, std::span<const std::string> parts) {
  return parts[term.num] + "/" + parts[term.den];
}

LogratioTerm parse_term(std::string_view label, const CompositionTable& table) {
  for (std::size_t pos = label.find('/'); pos != std::string_view::npos; pos = label.find('/', pos + 1)) {
    auto num = table.find_part(label.substr(0, pos));
    auto den = table.find_part(label.substr(pos + 1));
    if (num && den) {
      if (*num == *den)
        throw EligibilityError("invalid_term", "term '" + std::string(label) + "' divides a part by itself");
      return {*num, *den};
    }
  }
  throw EligibilityError("invalid_term",
                         "term '" + std::string(label) + "' is not of the form Num/Den over known parts");
}

}  // namespace lrstep
