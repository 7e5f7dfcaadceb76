#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evidencesql/feature_store.hpp"
#include "evidencesql/json_util.hpp"
#include "evidencesql/sql_ast.hpp"

namespace evidencesql {

enum class SourceAgent { Global, Local, Manual };
const char* source_agent_name(SourceAgent s);

enum class RepairKind { KeywordFix, IdentifierFix, QuoteFix, ClauseDrop };
const char* repair_kind_name(RepairKind k);

struct RepairAction {
    RepairKind kind;
    std::string before;
    std::string after;
    std::size_t edit_distance = 0;
    bool operator==(const RepairAction&) const = default;
};

enum class GuardStage { Sanitize, Parse, Schema, RepairExhausted };
const char* guard_stage_name(GuardStage s);

/// Structured refusal returned to the caller instead of an exception.
struct GuardRejection {
    GuardStage stage;
    std::string reason;
    /// Offset into the sanitized text (into the raw text for sanitize failures).
    std::optional<std::size_t> position;
    /// Remaining schema violations or parse errors when repair gave up.
    std::vector<std::string> residual;

    Json to_json() const;
};

enum class ViolationKind { UnknownTable, UnknownColumn, TypeError, GroupingError, Unsupported };
const char* violation_kind_name(ViolationKind k);

struct SchemaViolation {
    ViolationKind kind;
    /// The offending identifier for UnknownTable/UnknownColumn.
    std::string identifier;
    std::string message;
    bool operator==(const SchemaViolation&) const = default;
};

/// A query that passed every guard stage. Only the guard can create one, so
/// anything handed to the executor has been sanitized, parsed and schema-checked.
class ValidatedQuery {
public:
    const sql::QueryAst& ast() const { return ast_; }
    const std::string& canonical_text() const { return canonical_text_; }
    const std::vector<RepairAction>& repair_log() const { return repair_log_; }
    SourceAgent source_agent() const { return source_; }

    Json to_json() const;

private:
    friend struct GuardAccess;
    ValidatedQuery(sql::QueryAst ast, std::vector<RepairAction> log, SourceAgent source);

    sql::QueryAst ast_;
    std::string canonical_text_;
    std::vector<RepairAction> repair_log_;
    SourceAgent source_;
};

using GuardOutcome = std::variant<ValidatedQuery, GuardRejection>;

std::size_t levenshtein(std::string_view a, std::string_view b);

/// Strips markdown fences and surrounding prose, then screens for forbidden
/// statement heads, comment tokens and statement separators.
std::variant<std::string, GuardRejection> sanitize(std::string_view raw);

/// Empty iff every reference resolves and every operator/function receives
/// compatible argument types.
std::vector<SchemaViolation> check_schema(const sql::QueryAst& ast, const SchemaManifest& manifest);

/// Repair budget: at most this many repair passes per query.
inline constexpr int kRepairPassBudget = 3;
/// Maximum edit distance for keyword and identifier fixes.
inline constexpr std::size_t kMaxRepairDistance = 2;

/// Parse/check/repair loop over already-sanitized text.
GuardOutcome repair(std::string_view sanitized, const SchemaManifest& manifest, SourceAgent source);

/// sanitize -> parse -> check_schema -> repair.
GuardOutcome validate_pipeline(std::string_view raw, const SchemaManifest& manifest, SourceAgent source);

Json repair_action_to_json(const RepairAction& a);

}  // namespace evidencesql
