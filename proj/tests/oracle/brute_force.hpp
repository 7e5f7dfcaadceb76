#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evidencesql/feature_store.hpp"
#include "evidencesql/sql_ast.hpp"
#include "evidencesql/sql_exec.hpp"

namespace evidencesql::oracle {

/// Reference evaluator for the SQL subset. Deliberately naive: rows are
/// materialized as name->value maps, reals are carried in long double, groups
/// are found by linear search and ordering is an insertion sort.
struct OracleResult {
    std::vector<std::string> column_names;
    std::vector<std::vector<Value>> rows;
    /// Set instead of rows when evaluation hits a domain error.
    std::optional<std::string> error_kind;
};

OracleResult evaluate(const sql::QueryAst& query, const FeatureTable& table);

/// Empty when equal: integers and text exactly, reals within `rel_tol`
/// relative difference. Otherwise a description of the first difference.
std::optional<std::string> compare(const ResultTable& engine, const OracleResult& expected, double rel_tol);

/// Sort-and-interpolate quantile: sorts a copy of the samples and places the
/// p-quantile at fractional rank (n-1)p.
double sorted_quantile(std::vector<double> samples, double p);

}  // namespace evidencesql::oracle
