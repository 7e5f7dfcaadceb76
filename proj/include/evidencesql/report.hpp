#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evidencesql/agents.hpp"
#include "evidencesql/feature_store.hpp"
#include "evidencesql/fusion.hpp"
#include "evidencesql/json_util.hpp"
#include "evidencesql/knowledge.hpp"
#include "evidencesql/sql_exec.hpp"

namespace evidencesql {

inline constexpr const char* kReportSchemaVersion = "evidencesql.report/1";

/// One executed (or failed) query in the audit chain.
struct TraceEntry {
    std::string query_id;
    SourceAgent source = SourceAgent::Manual;
    std::string canonical_text;
    std::vector<RepairAction> repair_log;
    std::optional<ResultTable> result;
    std::optional<ExecError> error;

    Json to_json() const;
};

struct ContributingFeature {
    std::string feature_key;
    Value observed;
    std::string best_option;
    FitCategory category;
    std::string query_id;
};

struct ReportInputs {
    Question question;
    FusedDecision decision;
    /// Absent in cnn_only mode.
    std::optional<Hypothesis> hypothesis;
    std::vector<TraceEntry> trace;
    std::string transcripts_ref;
    std::vector<std::string> notes;
    /// Only ever set by a remote backend.
    std::optional<std::string> narrative;
};

enum class ReportFormat { Json, Markdown };

/// Throws DanglingQueryId when a finding points at a missing or failed
/// trace entry, PreconditionViolation when a trace entry does not reparse.
void check_audit_chain(const ReportInputs& in);

/// Best-fitting option per finding that has at least one fit.
std::vector<ContributingFeature> contributing_features(const Hypothesis& h, const std::vector<std::string>& options);

Json render_report_json(const ReportInputs& in);
std::string render_report_markdown(const ReportInputs& in);
/// JSON output goes through dump_canonical, so it is byte-deterministic.
std::string render_report(const ReportInputs& in, ReportFormat format);

/// Re-executes every successful trace entry of a serialized report and returns
/// the ids whose rows differ from the recorded ones.
std::vector<std::string> replay_report(const Json& report, const SchemaManifest& manifest, const CaseBundle& bundle);

}  // namespace evidencesql
