#pragma once

#include <string>
#include <vector>

#include "evidencesql/feature_store.hpp"
#include "evidencesql/json_util.hpp"
#include "evidencesql/llm_backend.hpp"
#include "evidencesql/sql_exec.hpp"
#include "evidencesql/sql_guard.hpp"

namespace evidencesql {

struct Question {
    std::string case_id;
    std::string prompt_text;
    /// Canonical option order used everywhere downstream.
    std::vector<std::string> options;

    /// Throws PreconditionViolation unless there are at least two unique options.
    void validate() const;
    Json to_json() const;
    static Question from_json(const Json& j);
};

enum class PlanFocus { Global, Local };

struct PlanTarget {
    std::string table;
    std::string column;
    std::string rationale;
    bool operator==(const PlanTarget&) const = default;
};

struct ReasoningPlan {
    std::vector<PlanTarget> targets;
    PlanFocus focus = PlanFocus::Global;
    Json to_json() const;
};

enum class AgentKind { Global, Local, Knowledge, Report };
const char* agent_kind_name(AgentKind k);

/// One backend round trip and what the guard made of it.
struct Exchange {
    std::string system_prompt;
    std::string user_prompt;
    std::string raw_response;
    std::vector<std::string> extracted_queries;
    /// Parallel to extracted_queries.
    std::vector<GuardOutcome> guard_outcomes;
    std::vector<std::string> notes;

    Json to_json() const;
};

/// Append-only record of every backend call made by one agent for one case.
class AgentTranscript {
public:
    explicit AgentTranscript(AgentKind agent) : agent_(agent) {}
    AgentKind agent() const { return agent_; }
    const std::vector<Exchange>& exchanges() const { return exchanges_; }
    void append(Exchange e) { exchanges_.push_back(std::move(e)); }
    Json to_json() const;

private:
    AgentKind agent_;
    std::vector<Exchange> exchanges_;
};

struct AgentSettings {
    double temperature = 0.0;
    double timeout_seconds = 60.0;
    /// Regeneration attempts after the first call.
    int max_retries = 2;
};

struct GlobalStage {
    ReasoningPlan plan;
    std::vector<std::string> raw_sql;
    std::vector<ValidatedQuery> queries;
    AgentTranscript transcript{AgentKind::Global};
};

struct LocalStage {
    std::vector<std::string> raw_sql;
    std::vector<ValidatedQuery> queries;
    AgentTranscript transcript{AgentKind::Local};
};

/// Fenced blocks tagged `sql`, or untagged blocks starting with SELECT, in
/// document order.
std::vector<std::string> extract_sql(std::string_view raw_response);

/// Compact data dictionary of the manifest used in every prompt.
std::string render_data_dictionary(const SchemaManifest& manifest);
std::string global_system_prompt(const SchemaManifest& manifest);
std::string local_system_prompt(const SchemaManifest& manifest);
std::string global_user_prompt(const Question& q);
std::string local_user_prompt(const Question& q, const ReasoningPlan& plan,
                              const std::vector<ResultTable>& global_results);

/// Throws BackendError or EmptyGeneration. Queries on non-global tables are
/// dropped and recorded as schema rejections.
GlobalStage plan_global(const Question& question, const SchemaManifest& manifest, LlmBackend& backend,
                        const AgentSettings& settings = {});

/// The local agent sees the global plan and the global query results.
LocalStage plan_local(const Question& question, const ReasoningPlan& plan,
                      const std::vector<ResultTable>& global_results, const SchemaManifest& manifest,
                      LlmBackend& backend, const AgentSettings& settings = {});

}  // namespace evidencesql
