#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evidencesql/feature_store.hpp"
#include "evidencesql/json_util.hpp"
#include "evidencesql/sql_guard.hpp"

namespace evidencesql {

struct ResultTable {
    std::vector<std::string> column_names;
    std::vector<std::vector<Value>> rows;
    std::string query_text;
    std::string case_id;

    bool operator==(const ResultTable&) const = default;
    Json to_json() const;
    static ResultTable from_json(const Json& j);
};

struct ExecError {
    std::string kind;
    std::string message;
    std::optional<std::size_t> row;
    Json to_json() const;
};

struct BatchEntry {
    std::size_t query_id;
    std::variant<ResultTable, ExecError> outcome;
};

/// Runs one guard-approved query against a case. Throws TableNotInBundle or
/// ArithmeticDomain.
ResultTable execute(const ValidatedQuery& query, const CaseBundle& bundle);

/// Order-preserving; a failing entry never aborts the rest.
std::vector<BatchEntry> execute_batch(const std::vector<ValidatedQuery>& queries, const CaseBundle& bundle);

std::string result_to_csv(const ResultTable& table);
/// Fixed-width text grid for terminals.
std::string result_to_text(const ResultTable& table);

}  // namespace evidencesql
