#pragma once

#include "lrstep/dataset.hpp"
#include "lrstep/reporting.hpp"
#include "lrstep/stepwise.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace lrstep {

using Json = nlohmann::ordered_json;

inline constexpr int kSessionFormatVersion = 1;

// Session files: dataset source, configuration and the recorded choices.
// Restoring replays the choices against the reloaded data.
Json session_to_json(const SelectionSession& session);

/// Loads the dataset named in the session file unless `data` is given.
SelectionSession session_from_json(const Json& doc, std::shared_ptr<const DatasetBundle> data = nullptr);

/// Loads the bundle a session file refers to, applying its recorded split.
DatasetBundle load_session_dataset(const Json& doc);

Json load_options_to_json(const LoadOptions& options);
LoadOptions load_options_from_json(const Json& doc);

Json fit_to_json(const FitSummary& fit);
Json ranking_to_json(const CandidateRanking& ranking, std::span<const std::string> part_names);
Json logcontrast_to_json(const LogContrastReport& report);
Json scree_to_json(const ScreeData& scree);
Json holdout_to_json(const HoldoutMetrics& metrics);

struct ReportOptions {
  std::optional<LogContrastReport> logcontrast;  // computed by the caller when wanted
  bool timestamp = true;
};

/// Top-level report with keys session, history, selected, fit, logcontrast,
/// scree, graph_dot (plus generated_at when timestamped).
Json report_json(const SelectionSession& session, const ReportOptions& options = {});

/// Log-contrast of the session's model, when the terms share a denominator.
std::optional<LogContrastReport> session_logcontrast(const SelectionSession& session);

// CSV tables.
void write_fit_csv(const FitSummary& fit, std::ostream& out);
void write_history_csv(const SelectionSession& session, std::ostream& out);
void write_scree_csv(const ScreeData& scree, std::ostream& out);
void write_logcontrast_csv(const LogContrastReport& report, std::ostream& out);
void write_ranking_table(const CandidateRanking& ranking, std::span<const std::string> part_names, std::ostream& out);

}  // namespace lrstep
