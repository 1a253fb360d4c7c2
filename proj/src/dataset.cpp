#include "lrstep/dataset.hpp"

#include "csv.hpp"
#include "lrstep/error.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace lrstep {

std::string_view to_string(ZeroPolicy policy) {
  return policy == ZeroPolicy::strict ? "strict" : "multiplicative";
}

ZeroPolicy parse_zero_policy(std::string_view text) {
  if (text == "strict") return ZeroPolicy::strict;
  if (text == "multiplicative") return ZeroPolicy::multiplicative;
  throw ValidationError("unknown zero policy '" + std::string(text) + "' (expected strict or multiplicative)");
}

std::size_t DatasetBundle::covariate_index(std::string_view name) const {
  for (std::size_t c = 0; c < covariate_names.size(); ++c)
    if (covariate_names[c] == name) return c;
  throw ValidationError("unknown covariate '" + std::string(name) + "'");
}

DatasetBundle DatasetBundle::select_rows(std::span<const std::size_t> rows) const {
  DatasetBundle out{composition.select_rows(rows), Eigen::VectorXd(static_cast<Eigen::Index>(rows.size())),
                    response_name, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), covariates.cols()),
                    covariate_names, family, provenance};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.response(static_cast<Eigen::Index>(r)) = response(src);
    if (covariates.cols() > 0) out.covariates.row(static_cast<Eigen::Index>(r)) = covariates.row(src);
  }
  return out;
}

void validate(const DatasetBundle& bundle) {
  const auto n = static_cast<Eigen::Index>(bundle.n());
  if (bundle.response.size() != n)
    throw ValidationError("response has " + std::to_string(bundle.response.size()) + " rows, composition has " +
                          std::to_string(n));
  if (bundle.covariates.cols() > 0 && bundle.covariates.rows() != n)
    throw ValidationError("covariates have a different row count than the composition");
  if (static_cast<std::size_t>(bundle.covariates.cols()) != bundle.covariate_names.size())
    throw ValidationError("covariate names do not match covariate columns");
  check_response(bundle.response, bundle.family);
}

namespace {

std::string where(const std::string& file, std::size_t line) {
  return (file.empty() ? std::string("<input>") : file) + ":" + std::to_string(line);
}

std::optional<std::size_t> column_of(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t c = 1; c < header.size(); ++c)
    if (header[c] == name) return c;
  return std::nullopt;
}

double number_at(const csv::Row& row, std::size_t col, const std::vector<std::string>& header,
                 const std::string& file) {
  if (col >= row.fields.size())
    throw ValidationError(where(file, row.line) + ": missing value for column '" + header[col] + "'");
  auto v = csv::parse_number(row.fields[col]);
  if (!v)
    throw ValidationError(where(file, row.line) + ": column '" + header[col] + "': '" + row.fields[col] +
                          "' is not a number");
  return *v;
}

void check_response_value(double v, Family family, const std::string& loc) {
  if (!std::isfinite(v)) throw ValidationError(loc + ": response is not finite");
  if (family == Family::binomial && v != 0.0 && v != 1.0)
    throw ValidationError(loc + ": response not in {0,1} (got " + csv::format_number(v) + ")");
  if (family == Family::poisson && (v < 0.0 || v != std::floor(v)))
    throw ValidationError(loc + ": response is not a nonnegative integer count (got " + csv::format_number(v) + ")");
}

}  // namespace

DatasetBundle parse_dataset(std::istream& composition, std::istream* response_stream, const LoadOptions& options) {
  const std::string& file = options.composition_path;
  if (!(options.zero_fraction > 0.0 && options.zero_fraction < 1.0))
    throw ValidationError("zero fraction must lie in (0, 1), got " + std::to_string(options.zero_fraction));
  const csv::Table table = csv::read(composition);
  if (table.header.size() < 3)
    throw ValidationError(where(file, 1) + ": need a sample id column and at least two part columns");
  if (table.rows.empty()) throw ValidationError(where(file, 1) + ": no data rows");

  const auto response_col = column_of(table.header, options.response);

  std::optional<csv::Table> response_table;
  if (!response_col) {
    if (options.response.empty()) throw ValidationError("no response column or file given");
    if (!response_stream)
      throw ValidationError("response '" + options.response + "' is neither a column of " + file + " nor a file");
    response_table = csv::read(*response_stream);
    if (response_table->header.size() < 2)
      throw ValidationError(where(options.response, 1) + ": response file needs a sample id and a response column");
  }

  // Covariates are looked up in the composition file, then the response file.
  struct CovSource {
    bool in_response_file;
    std::size_t column;
  };
  std::vector<CovSource> cov_sources;
  for (const auto& name : options.covariates) {
    if (auto c = column_of(table.header, name)) {
      cov_sources.push_back({false, *c});
    } else if (response_table) {
      auto rc = column_of(response_table->header, name);
      if (!rc) throw ValidationError("covariate column '" + name + "' not found");
      cov_sources.push_back({true, *rc});
    } else {
      throw ValidationError("covariate column '" + name + "' not found in " + file);
    }
  }

  std::vector<std::size_t> part_cols;
  std::vector<std::string> parts;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    if (response_col && c == *response_col) continue;
    const bool is_cov = std::any_of(cov_sources.begin(), cov_sources.end(),
                                    [&](const CovSource& s) { return !s.in_response_file && s.column == c; });
    if (is_cov) continue;
    if (std::find(parts.begin(), parts.end(), table.header[c]) != parts.end())
      throw ValidationError(where(file, 1) + ": duplicate part name '" + table.header[c] + "'");
    if (table.header[c].empty()) throw ValidationError(where(file, 1) + ": empty part name in column " + std::to_string(c + 1));
    part_cols.push_back(c);
    parts.push_back(table.header[c]);
  }
  if (parts.size() < 2) throw ValidationError(where(file, 1) + ": fewer than two composition columns");

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(parts.size()));
  std::vector<std::string> ids;
  ids.reserve(table.rows.size());
  std::unordered_map<std::string, Eigen::Index> row_of_id;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    if (row.fields.size() != table.header.size())
      throw ValidationError(where(file, row.line) + ": expected " + std::to_string(table.header.size()) +
                            " fields, found " + std::to_string(row.fields.size()));
    ids.push_back(row.fields[0]);
    if (!row_of_id.emplace(row.fields[0], i).second)
      throw ValidationError(where(file, row.line) + ": duplicate sample id '" + row.fields[0] + "'");
    for (std::size_t k = 0; k < part_cols.size(); ++k) {
      const double v = number_at(row, part_cols[k], table.header, file);
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ValidationError(where(file, row.line) + ": row " + std::to_string(i + 1) + ", column '" + parts[k] +
                              "': negative or non-finite abundance " + row.fields[part_cols[k]]);
      raw(i, static_cast<Eigen::Index>(k)) = v;
    }
  }

  Eigen::VectorXd response(n);
  Eigen::MatrixXd covariates(n, static_cast<Eigen::Index>(cov_sources.size()));
  std::string response_name = options.response;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    if (response_col) {
      response(i) = number_at(row, *response_col, table.header, file);
      check_response_value(response(i), options.family, where(file, row.line));
    }
    for (std::size_t k = 0; k < cov_sources.size(); ++k)
      if (!cov_sources[k].in_response_file)
        covariates(i, static_cast<Eigen::Index>(k)) = number_at(row, cov_sources[k].column, table.header, file);
  }

  if (response_table) {
    response_name = response_table->header[1];
    if (response_table->rows.size() != static_cast<std::size_t>(n))
      throw ValidationError(where(options.response, 1) + ": response file has " +
                            std::to_string(response_table->rows.size()) + " rows, composition has " +
                            std::to_string(n));
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (const auto& row : response_table->rows) {
      if (row.fields.size() != response_table->header.size())
        throw ValidationError(where(options.response, row.line) + ": wrong field count");
      auto it = row_of_id.find(row.fields[0]);
      if (it == row_of_id.end())
        throw ValidationError(where(options.response, row.line) + ": sample id '" + row.fields[0] +
                              "' not present in " + file);
      const Eigen::Index i = it->second;
      if (seen[static_cast<std::size_t>(i)])
        throw ValidationError(where(options.response, row.line) + ": duplicate sample id '" + row.fields[0] + "'");
      seen[static_cast<std::size_t>(i)] = true;
      response(i) = number_at(row, 1, response_table->header, options.response);
      check_response_value(response(i), options.family, where(options.response, row.line));
      for (std::size_t k = 0; k < cov_sources.size(); ++k)
        if (cov_sources[k].in_response_file)
          covariates(i, static_cast<Eigen::Index>(k)) =
              number_at(row, cov_sources[k].column, response_table->header, options.response);
    }
  }

  const auto zeros = static_cast<std::size_t>((raw.array() == 0.0).count());
  if (zeros > 0 && options.zero_policy == ZeroPolicy::strict) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < raw.cols(); ++j)
        if (raw(i, j) == 0.0)
          throw ValidationError(where(file, table.rows[static_cast<std::size_t>(i)].line) + ": row " +
                                std::to_string(i + 1) + ", column '" + parts[static_cast<std::size_t>(j)] +
                                "': zero abundance under the strict zero policy");
  }

  DatasetBundle bundle{
      zeros > 0 ? replace_zeros(raw, parts, ids, options.zero_fraction) : CompositionTable(parts, raw, ids),
      std::move(response),
      response_name,
      std::move(covariates),
      options.covariates,
      options.family,
      Provenance{options, zeros, std::nullopt, {}}};
  validate(bundle);
  return bundle;
}

DatasetBundle load_dataset(const LoadOptions& options) {
  std::ifstream comp(options.composition_path);
  if (!comp) throw IoError("cannot open composition file '" + options.composition_path + "'");

  // Peek at the header to decide whether the response is a column.
  std::string header_line;
  std::getline(comp, header_line);
  std::istringstream header_stream(header_line);
  const auto header = csv::read(header_stream).header;
  comp.clear();
  comp.seekg(0);

  if (column_of(header, options.response) || options.response.empty()) return parse_dataset(comp, nullptr, options);
  std::ifstream resp(options.response);
  if (!resp)
    throw IoError("response '" + options.response + "' is neither a column of '" + options.composition_path +
                  "' nor a readable file");
  return parse_dataset(comp, &resp, options);
}

void write_dataset(const DatasetBundle& bundle, std::ostream& out) {
  out << "sample_id";
  for (const auto& p : bundle.composition.parts()) out << ',' << csv::quote(p);
  for (const auto& c : bundle.covariate_names) out << ',' << csv::quote(c);
  out << ',' << csv::quote(bundle.response_name) << '\n';
  const auto& x = bundle.composition.samples();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << csv::quote(bundle.composition.sample_ids()[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << csv::format_number(x(i, j));
    for (Eigen::Index c = 0; c < bundle.covariates.cols(); ++c)
      out << ',' << csv::format_number(bundle.covariates(i, c));
    out << ',' << csv::format_number(bundle.response(i)) << '\n';
  }
}

std::pair<DatasetBundle, DatasetBundle> split_holdout(const DatasetBundle& bundle, const SplitSpec& spec) {
  const std::size_t n = bundle.n();
  if (n < 3) throw ValidationError("holdout split needs at least 3 samples");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ValidationError("train fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train_fraction));
  if (n_train == 0 || n_train >= n)
    throw ValidationError("train fraction " + csv::format_number(spec.train_fraction) + " leaves an empty partition for n=" +
                          std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> holdout(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());

  auto a = bundle.select_rows(train);
  auto b = bundle.select_rows(holdout);
  a.provenance.split = spec;
  a.provenance.partition = "train";
  b.provenance.split = spec;
  b.provenance.partition = "holdout";
  return {std::move(a), std::move(b)};
}

Eigen::MatrixXd build_design(const DatasetBundle& data, const ModelTerms& model) {
  const auto n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(model.parameter_count()));
  X.col(0).setOnes();
  Eigen::Index col = 1;
  for (std::size_t c : model.covariates) {
    if (c >= static_cast<std::size_t>(data.covariates.cols()))
      throw ValidationError("covariate index " + std::to_string(c) + " out of range");
    X.col(col++) = data.covariates.col(static_cast<Eigen::Index>(c));
  }
  for (const auto& t : model.terms) X.col(col++) = lr_values(data.composition, t);
  return X;
}

std::vector<std::string> design_labels(const DatasetBundle& data, const ModelTerms& model) {
  std::vector<std::string> labels{"(Intercept)"};
  for (std::size_t c : model.covariates) labels.push_back(data.covariate_names.at(c));
  for (const auto& t : model.terms) labels.push_back(term_label(t, data.composition.parts()));
  return labels;
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with midranks.
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1.0) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

HoldoutMetrics evaluate_holdout(const FitSummary& fit, const ModelTerms& model, const DatasetBundle& training,
                                const DatasetBundle& holdout) {
  if (holdout.family != fit.family) throw ValidationError("holdout family differs from the fitted model");
  const auto& train_parts = training.composition.parts();
  if (holdout.composition.parts() != train_parts)
    throw ValidationError("holdout parts do not match the training parts");
  // Covariates may sit in a different column order.
  ModelTerms mapped;
  for (const auto& t : model.terms) {
    auto num = holdout.composition.find_part(train_parts.at(t.num));
    auto den = holdout.composition.find_part(train_parts.at(t.den));
    if (!num || !den)
      throw ValidationError("holdout data lacks part '" + train_parts.at(num ? t.den : t.num) + "' used by the model");
    mapped.terms.push_back({*num, *den});
  }
  for (std::size_t c : model.covariates) mapped.covariates.push_back(holdout.covariate_index(training.covariate_names.at(c)));

  const Eigen::MatrixXd X = build_design(holdout, mapped);
  if (X.cols() != fit.coefficients.size()) throw ValidationError("model terms do not match the fitted coefficients");
  const Eigen::VectorXd eta = X * fit.coefficients;

  HoldoutMetrics metrics;
  metrics.n = holdout.n();
  metrics.deviance = minus2loglik(holdout.response, eta, fit.family, fit.dispersion);
  if (fit.family == Family::binomial) {
    const Eigen::VectorXd p = mean_response(eta, fit.family);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if ((p(i) >= 0.5 ? 1.0 : 0.0) == holdout.response(i)) ++correct;
    metrics.accuracy = static_cast<double>(correct) / static_cast<double>(p.size());
    metrics.auc = roc_auc(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                          std::span<const double>(holdout.response.data(), holdout.n()));
  }
  return metrics;
}

}  // namespace lrstep
